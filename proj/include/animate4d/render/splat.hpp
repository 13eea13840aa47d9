#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/parallel.hpp"
#include "animate4d/core/quaternion.hpp"
#include "animate4d/core/types.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace animate4d {

struct RenderSettings {
    static constexpr double kDilation = 0.3;        ///< px^2 added to the 2D covariance diagonal
    static constexpr double kMaxAlpha = 0.99;
    static constexpr double kMinTransmittance = 1e-4;
    static constexpr double kNearPlane = 0.01;
    static constexpr double kExtentSigmas = 3.5;    ///< screen-space footprint radius
    static constexpr int kTile = 8;
};

/// Screen-space footprint of one Gaussian, kept for the backward pass.
struct ProjectedSplat {
    int index = 0;                 ///< position in the source cloud
    double depth = 0.0;
    Vec3 cam = Vec3::Zero();       ///< camera-space center
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();   ///< dilated 2D covariance
    Eigen::Matrix2d conic = Eigen::Matrix2d::Identity(); ///< its inverse
    Mat3 cov3d = Mat3::Zero();
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;                ///< inclusive pixel footprint
};

/// Flat copy of what the pixel loops read, in the same order as RenderState::splats.
struct RasterSplat {
    double mx, my;          ///< screen mean
    double a, b, c;         ///< conic entries (xx, xy, yy)
    double opacity;
    double r, g, bl;        ///< color
    int x0, x1, y0, y1;
};

struct RenderState {
    Camera camera;
    std::size_t num_gaussians = 0;
    std::vector<ProjectedSplat> splats;          ///< front-to-back
    std::vector<RasterSplat> raster;             ///< parallel to splats
    std::vector<std::vector<int>> tile_lists;    ///< indices into splats, front-to-back
    std::vector<int> contributors;               ///< per pixel: entries of its tile list traversed
    std::vector<double> final_transmittance;     ///< per pixel
    int tiles_x = 0;
    int tiles_y = 0;
};

struct RenderOutput {
    Image rgb;   ///< H x W x 3
    Image mask;  ///< H x W x 1, equals 1 - final transmittance
    RenderState state;
};

/// Gradients w.r.t. the geometric attributes; colors and opacities are not differentiated.
struct RenderGrads {
    std::vector<Vec3> positions;
    std::vector<Quat> rotations;
    std::vector<Vec3> scales;

    explicit RenderGrads(std::size_t n = 0)
        : positions(n, Vec3::Zero()), rotations(n, Quat::Zero()), scales(n, Vec3::Zero())
    {
    }
};

namespace detail {

inline Mat3 covariance3d(const Quat& raw_rotation, const Vec3& scale)
{
    const Mat3 m = quat_to_matrix(raw_rotation / raw_rotation.norm()) * scale.asDiagonal();
    return m * m.transpose();
}

inline Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Vec3& p)
{
    Eigen::Matrix<double, 2, 3> j;
    const double z = p.z(), z2 = z * z;
    j << cam.fx / z, 0.0, -cam.fx * p.x() / z2, 0.0, cam.fy / z, -cam.fy * p.y() / z2;
    return j;
}

} // namespace detail

/// Rasterizes the cloud: EWA projection, depth sort by center, front-to-back compositing
/// over a black background.
inline RenderOutput render(const GaussianCloud& cloud, const Camera& cam)
{
    using S = RenderSettings;
    RenderOutput out;
    out.rgb = Image(cam.width, cam.height, 3);
    out.mask = Image(cam.width, cam.height, 1);
    auto& st = out.state;
    st.camera = cam;
    st.num_gaussians = cloud.size();

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        ProjectedSplat s;
        s.index = static_cast<int>(i);
        s.cam = cam.to_camera(cloud.positions[i]);
        if (s.cam.z() <= S::kNearPlane) continue;
        s.depth = s.cam.z();
        s.mean = {cam.fx * s.cam.x() / s.cam.z() + cam.cx, cam.fy * s.cam.y() / s.cam.z() + cam.cy};
        s.cov3d = detail::covariance3d(cloud.rotations[i], cloud.scales[i]);
        const Eigen::Matrix<double, 2, 3> t = detail::projection_jacobian(cam, s.cam) * cam.rotation;
        s.cov = t * s.cov3d * t.transpose();
        s.cov(0, 0) += S::kDilation;
        s.cov(1, 1) += S::kDilation;
        s.conic = s.cov.inverse();
        const double mid = 0.5 * (s.cov(0, 0) + s.cov(1, 1));
        const double disc = std::sqrt(std::max(0.0, mid * mid - s.cov.determinant()));
        const double radius = std::ceil(S::kExtentSigmas * std::sqrt(mid + disc));
        s.x0 = std::max(0, static_cast<int>(std::floor(s.mean.x() - radius)));
        s.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(s.mean.x() + radius)));
        s.y0 = std::max(0, static_cast<int>(std::floor(s.mean.y() - radius)));
        s.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(s.mean.y() + radius)));
        if (s.x0 > s.x1 || s.y0 > s.y1) continue;
        st.splats.push_back(s);
    }
    std::stable_sort(st.splats.begin(), st.splats.end(),
                     [](const ProjectedSplat& a, const ProjectedSplat& b) { return a.depth < b.depth; });

    st.raster.reserve(st.splats.size());
    for (const auto& s : st.splats) {
        const Vec3& col = cloud.colors[s.index];
        st.raster.push_back({s.mean.x(), s.mean.y(), s.conic(0, 0), s.conic(0, 1), s.conic(1, 1),
                             cloud.opacities[s.index], col.x(), col.y(), col.z(), s.x0, s.x1, s.y0, s.y1});
    }

    st.tiles_x = (cam.width + S::kTile - 1) / S::kTile;
    st.tiles_y = (cam.height + S::kTile - 1) / S::kTile;
    st.tile_lists.assign(static_cast<std::size_t>(st.tiles_x) * st.tiles_y, {});
    for (int k = 0; k < static_cast<int>(st.splats.size()); ++k) {
        const auto& s = st.splats[k];
        for (int ty = s.y0 / S::kTile; ty <= s.y1 / S::kTile; ++ty)
            for (int tx = s.x0 / S::kTile; tx <= s.x1 / S::kTile; ++tx)
                st.tile_lists[static_cast<std::size_t>(ty) * st.tiles_x + tx].push_back(k);
    }

    const std::size_t pixels = static_cast<std::size_t>(cam.width) * cam.height;
    st.contributors.assign(pixels, 0);
    st.final_transmittance.assign(pixels, 1.0);

    parallel_for(st.tile_lists.size(), [&](std::size_t tile) {
        const int tx = static_cast<int>(tile) % st.tiles_x, ty = static_cast<int>(tile) / st.tiles_x;
        const auto& list = st.tile_lists[tile];
        for (int y = ty * S::kTile; y < std::min(cam.height, (ty + 1) * S::kTile); ++y)
            for (int x = tx * S::kTile; x < std::min(cam.width, (tx + 1) * S::kTile); ++x) {
                const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
                double transmittance = 1.0;
                double cr = 0.0, cg = 0.0, cb = 0.0;
                int traversed = 0;
                for (int k : list) {
                    ++traversed;
                    const RasterSplat& s = st.raster[k];
                    if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
                    const double dx = x - s.mx, dy = y - s.my;
                    const double power = s.a * dx * dx + 2.0 * s.b * dx * dy + s.c * dy * dy;
                    const double alpha = std::min(S::kMaxAlpha, s.opacity * std::exp(-0.5 * power));
                    const double w = alpha * transmittance;
                    cr += s.r * w;
                    cg += s.g * w;
                    cb += s.bl * w;
                    transmittance *= 1.0 - alpha;
                    if (transmittance < S::kMinTransmittance) break;
                }
                st.contributors[pix] = traversed;
                st.final_transmittance[pix] = transmittance;
                out.rgb.data[pix * 3] = cr;
                out.rgb.data[pix * 3 + 1] = cg;
                out.rgb.data[pix * 3 + 2] = cb;
                out.mask.data[pix] = 1.0 - transmittance;
            }
    });
    return out;
}

/// Exact adjoint of render() for the geometric attributes, given dL/d-rgb (H x W x 3)
/// and dL/d-mask (H x W x 1).
inline RenderGrads render_backward(const GaussianCloud& cloud, const Camera& cam, const RenderOutput& forward,
                                   const Image& grad_rgb, const Image& grad_mask)
{
    using S = RenderSettings;
    const auto& st = forward.state;
    if (st.num_gaussians != cloud.size() || st.camera.width != cam.width || st.camera.height != cam.height ||
        st.camera.rotation != cam.rotation || st.camera.translation != cam.translation)
        throw ValidationError("render_backward: forward state does not match the cloud or camera");
    if (grad_rgb.width != cam.width || grad_rgb.height != cam.height || grad_rgb.channels != 3 ||
        grad_mask.width != cam.width || grad_mask.height != cam.height || grad_mask.channels != 1)
        throw ValidationError("render_backward: upstream gradient shape mismatch");

    // Screen-space gradients per tile-list entry: d mean and d conic (symmetric, as xx, xy, yy
    // where the xy entry collects both off-diagonal terms).
    struct ScreenGrad {
        double mx = 0.0, my = 0.0, a = 0.0, b = 0.0, c = 0.0;
    };
    std::vector<std::vector<ScreenGrad>> tile_grads(st.tile_lists.size());

    parallel_for(st.tile_lists.size(), [&](std::size_t tile) {
        const int tx = static_cast<int>(tile) % st.tiles_x, ty = static_cast<int>(tile) / st.tiles_x;
        const auto& list = st.tile_lists[tile];
        auto& grads = tile_grads[tile];
        grads.assign(list.size(), ScreenGrad{});
        for (int y = ty * S::kTile; y < std::min(cam.height, (ty + 1) * S::kTile); ++y)
            for (int x = tx * S::kTile; x < std::min(cam.width, (tx + 1) * S::kTile); ++x) {
                const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
                const double gr = grad_rgb.data[pix * 3], gg = grad_rgb.data[pix * 3 + 1],
                             gb = grad_rgb.data[pix * 3 + 2];
                const double g_mask = grad_mask.data[pix];
                if (gr == 0.0 && gg == 0.0 && gb == 0.0 && g_mask == 0.0) continue;
                double transmittance = st.final_transmittance[pix];
                // color and mask composited behind the current splat, normalized
                double br = 0.0, bg = 0.0, bb = 0.0, behind_mask = 0.0;
                for (int e = st.contributors[pix] - 1; e >= 0; --e) {
                    const RasterSplat& s = st.raster[list[e]];
                    if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
                    const double dx = x - s.mx, dy = y - s.my;
                    const double power = s.a * dx * dx + 2.0 * s.b * dx * dy + s.c * dy * dy;
                    const double raw = s.opacity * std::exp(-0.5 * power);
                    const double alpha = std::min(S::kMaxAlpha, raw);
                    transmittance /= 1.0 - alpha; // now T_i, transmittance in front of this splat
                    const double g_alpha = transmittance * (gr * (s.r - br) + gg * (s.g - bg) + gb * (s.bl - bb) +
                                                            g_mask * (1.0 - behind_mask));
                    br = alpha * s.r + (1.0 - alpha) * br;
                    bg = alpha * s.g + (1.0 - alpha) * bg;
                    bb = alpha * s.bl + (1.0 - alpha) * bb;
                    behind_mask = alpha + (1.0 - alpha) * behind_mask;
                    if (raw >= S::kMaxAlpha) continue;
                    const double g_power = g_alpha * (-0.5 * raw);
                    auto& g = grads[e];
                    g.mx += g_power * (-2.0 * (s.a * dx + s.b * dy));
                    g.my += g_power * (-2.0 * (s.b * dx + s.c * dy));
                    g.a += g_power * dx * dx;
                    g.b += g_power * 2.0 * dx * dy;
                    g.c += g_power * dy * dy;
                }
            }
    });

    std::vector<ScreenGrad> splat_grads(st.splats.size());
    for (std::size_t tile = 0; tile < st.tile_lists.size(); ++tile)
        for (std::size_t e = 0; e < tile_grads[tile].size(); ++e) {
            auto& g = splat_grads[st.tile_lists[tile][e]];
            const auto& t = tile_grads[tile][e];
            g.mx += t.mx;
            g.my += t.my;
            g.a += t.a;
            g.b += t.b;
            g.c += t.c;
        }

    RenderGrads out(cloud.size());
    for (std::size_t k = 0; k < st.splats.size(); ++k) {
        const auto& s = st.splats[k];
        const auto& sg = splat_grads[k];
        if (sg.mx == 0.0 && sg.my == 0.0 && sg.a == 0.0 && sg.b == 0.0 && sg.c == 0.0) continue;
        struct {
            Eigen::Vector2d mean;
            Eigen::Matrix2d conic;
        } g;
        g.mean = {sg.mx, sg.my};
        g.conic << sg.a, 0.5 * sg.b, 0.5 * sg.b, sg.c;
        const Vec3& p = s.cam;
        const double z = p.z(), z2 = z * z, z3 = z2 * z;

        // conic = cov^-1
        const Eigen::Matrix2d g_cov = -s.conic.transpose() * g.conic * s.conic.transpose();
        const Eigen::Matrix<double, 2, 3> jac = detail::projection_jacobian(cam, p);
        const Eigen::Matrix<double, 2, 3> t = jac * cam.rotation;
        const Eigen::Matrix2d g_cov_sym = 0.5 * (g_cov + g_cov.transpose());
        const Mat3 g_cov3d = t.transpose() * g_cov_sym * t;
        const Eigen::Matrix<double, 2, 3> g_t = 2.0 * g_cov_sym * t * s.cov3d;
        const Eigen::Matrix<double, 2, 3> g_jac = g_t * cam.rotation.transpose();

        Vec3 g_cam = Vec3::Zero();
        g_cam.x() += g.mean.x() * cam.fx / z;
        g_cam.y() += g.mean.y() * cam.fy / z;
        g_cam.z() += -g.mean.x() * cam.fx * p.x() / z2 - g.mean.y() * cam.fy * p.y() / z2;
        g_cam.z() += -g_jac(0, 0) * cam.fx / z2 - g_jac(1, 1) * cam.fy / z2 + g_jac(0, 2) * 2 * cam.fx * p.x() / z3 +
                     g_jac(1, 2) * 2 * cam.fy * p.y() / z3;
        g_cam.x() += -g_jac(0, 2) * cam.fx / z2;
        g_cam.y() += -g_jac(1, 2) * cam.fy / z2;
        out.positions[s.index] = cam.rotation.transpose() * g_cam;

        // cov3d = M M^T with M = R(q) diag(s)
        const Quat& raw_q = cloud.rotations[s.index];
        const Quat unit_q = raw_q / raw_q.norm();
        const Mat3 rot = quat_to_matrix(unit_q);
        const Vec3& scale = cloud.scales[s.index];
        const Mat3 m = rot * scale.asDiagonal();
        const Mat3 g_m = (g_cov3d + g_cov3d.transpose()) * m;
        const Mat3 g_rot = g_m * scale.asDiagonal();
        for (int a = 0; a < 3; ++a) out.scales[s.index][a] = rot.col(a).dot(g_m.col(a));
        out.rotations[s.index] = normalize_backward(raw_q, quat_to_matrix_backward(unit_q, g_rot));
    }
    return out;
}

} // namespace animate4d
