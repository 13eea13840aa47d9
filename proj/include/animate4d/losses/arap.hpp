#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/types.hpp"

#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace animate4d {

/// Fixed-radius neighborhoods of the rest pose, weighted by w = exp(-d / mean_distance).
struct NeighborGraph {
    std::vector<Vec3> rest;
    std::vector<std::vector<int>> neighbors;
    std::vector<std::vector<double>> weights;
    double radius = 0.0;
    double mean_distance = 0.0; ///< mean over all neighbor pairs inside the radius

    [[nodiscard]] std::size_t size() const { return rest.size(); }
    [[nodiscard]] std::size_t edge_count() const
    {
        std::size_t n = 0;
        for (const auto& l : neighbors) n += l.size();
        return n;
    }
};

inline NeighborGraph build_neighbor_graph(std::span<const Vec3> rest, double radius)
{
    detail::require(radius > 0.0, "neighbor radius must be positive");
    NeighborGraph g;
    g.rest.assign(rest.begin(), rest.end());
    g.radius = radius;
    const std::size_t n = rest.size();
    g.neighbors.assign(n, {});
    g.weights.assign(n, {});
    std::vector<std::vector<double>> dist(n);
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = j + 1; k < n; ++k) {
            const double d = (rest[j] - rest[k]).norm();
            if (d > radius) continue;
            g.neighbors[j].push_back(static_cast<int>(k));
            g.neighbors[k].push_back(static_cast<int>(j));
            dist[j].push_back(d);
            dist[k].push_back(d);
            sum += d;
            ++pairs;
        }
    g.mean_distance = pairs > 0 ? sum / static_cast<double>(pairs) : 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        // Sort each list so traversal order is canonical.
        std::vector<std::size_t> order(g.neighbors[j].size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return g.neighbors[j][a] < g.neighbors[j][b]; });
        std::vector<int> ids;
        for (std::size_t i : order) {
            ids.push_back(g.neighbors[j][i]);
            g.weights[j].push_back(g.mean_distance > 0.0 ? std::exp(-dist[j][i] / g.mean_distance) : 1.0);
        }
        g.neighbors[j] = std::move(ids);
    }
    return g;
}

inline NeighborGraph build_neighbor_graph(const GaussianCloud& rest, double radius)
{
    return build_neighbor_graph(std::span<const Vec3>(rest.positions), radius);
}

/// Four times the median nearest-neighbor distance.
inline double default_neighbor_radius(std::span<const Vec3> points)
{
    detail::require(points.size() >= 2, "need at least two points for a neighbor radius");
    std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j < points.size(); ++j)
        for (std::size_t k = 0; k < points.size(); ++k)
            if (j != k) nearest[j] = std::min(nearest[j], (points[j] - points[k]).norm());
    std::nth_element(nearest.begin(), nearest.begin() + static_cast<std::ptrdiff_t>(nearest.size() / 2), nearest.end());
    const double median = nearest[nearest.size() / 2];
    return median > 0.0 ? 4.0 * median : 1e-3;
}

namespace detail {

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
inline Mat3 align_directions(const Vec3& from, const Vec3& to)
{
    const Vec3 axis = from.cross(to);
    const double s = axis.norm(), c = from.dot(to);
    if (s < 1e-15) {
        if (c > 0.0) return Mat3::Identity();
        Vec3 perp = std::abs(from.x()) < 0.9 ? from.cross(Vec3::UnitX()) : from.cross(Vec3::UnitY());
        perp.normalize();
        return 2.0 * perp * perp.transpose() - Mat3::Identity();
    }
    const Vec3 k = axis / s;
    Mat3 kx;
    kx << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
    return Mat3::Identity() + s * kx + (1.0 - c) * kx * kx;
}

} // namespace detail

/// Best-fit rotation R in SO(3) minimizing sum_k w_k |cur_k - R rest_k|^2 via SVD of the
/// weighted covariance sum_k w_k cur_k rest_k^T. Rank-deficient covariances keep the null
/// directions fixed.
inline Mat3 estimate_rotation(std::span<const Vec3> rest_edges, std::span<const Vec3> current_edges,
                              std::span<const double> weights)
{
    detail::require(!rest_edges.empty(), "estimate_rotation needs at least one edge");
    detail::require(rest_edges.size() == current_edges.size() && rest_edges.size() == weights.size(),
                    "estimate_rotation: edge and weight counts differ");
    Mat3 cov = Mat3::Zero();
    for (std::size_t k = 0; k < rest_edges.size(); ++k)
        cov += weights[k] * current_edges[k] * rest_edges[k].transpose();

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sv = svd.singularValues();
    const double tol = 1e-12 * std::max(sv[0], std::numeric_limits<double>::min());
    const int rank = static_cast<int>((sv.array() > tol).count());
    if (sv[0] <= 0.0 || rank == 0) return Mat3::Identity();
    if (rank == 1) return detail::align_directions(svd.matrixV().col(0), svd.matrixU().col(0));
    const Mat3& u = svd.matrixU();
    const Mat3& v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    d(2, 2) = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    return u * d * v.transpose();
}

struct ArapResult {
    double loss = 0.0;
    /// Gradient per supervised frame: grads[i - 1] belongs to frames[i] for i >= 1.
    std::vector<std::vector<Vec3>> grads;
};

/// frames[0] is the rest pose, frames[1..] the deformed poses. For every point j and
/// frame i >= 1, a rotation is fit from rest edges to current edges and the weighted
/// residual |(p_j^i - p_k^i) - R (p_j^0 - p_k^0)|^2 is summed. Rotations are held constant
/// in the gradient.
inline ArapResult arap_loss(std::span<const std::vector<Vec3>> frames, const NeighborGraph& graph)
{
    detail::require(!frames.empty(), "arap_loss needs at least the rest frame");
    for (const auto& f : frames)
        if (f.size() != graph.size()) throw ValidationError("arap_loss: frame point count differs from the graph");
    ArapResult out;
    out.grads.assign(frames.size() - 1, std::vector<Vec3>(graph.size(), Vec3::Zero()));
    const auto& rest = frames[0];
    std::vector<Vec3> rest_edges, cur_edges;
    for (std::size_t i = 1; i < frames.size(); ++i) {
        const auto& cur = frames[i];
        auto& grad = out.grads[i - 1];
        for (std::size_t j = 0; j < graph.size(); ++j) {
            const auto& nbrs = graph.neighbors[j];
            if (nbrs.empty()) continue;
            rest_edges.clear();
            cur_edges.clear();
            for (int k : nbrs) {
                rest_edges.push_back(rest[j] - rest[k]);
                cur_edges.push_back(cur[j] - cur[k]);
            }
            const Mat3 rot = estimate_rotation(rest_edges, cur_edges, graph.weights[j]);
            for (std::size_t e = 0; e < nbrs.size(); ++e) {
                const double w = graph.weights[j][e];
                const Vec3 r = cur_edges[e] - rot * rest_edges[e];
                out.loss += w * r.squaredNorm();
                grad[j] += 2.0 * w * r;
                grad[nbrs[e]] -= 2.0 * w * r;
            }
        }
    }
    return out;
}

/// Mean over graph edges of the variance of edge length across frames. Zero for rigid motion.
inline double edge_length_variance(std::span<const std::vector<Vec3>> frames, const NeighborGraph& graph)
{
    detail::require(!frames.empty(), "edge_length_variance needs frames");
    double total = 0.0;
    std::size_t edges = 0;
    for (std::size_t j = 0; j < graph.size(); ++j)
        for (int k : graph.neighbors[j]) {
            if (k < static_cast<int>(j)) continue;
            double mean = 0.0, sq = 0.0;
            for (const auto& f : frames) {
                const double len = (f[j] - f[k]).norm();
                mean += len;
                sq += len * len;
            }
            mean /= static_cast<double>(frames.size());
            total += std::max(0.0, sq / static_cast<double>(frames.size()) - mean * mean);
            ++edges;
        }
    return edges > 0 ? total / static_cast<double>(edges) : 0.0;
}

} // namespace animate4d
