#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/io.hpp"
#include "animate4d/core/mlp.hpp"
#include "animate4d/core/params.hpp"
#include "animate4d/core/types.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace animate4d {

struct HexPlaneConfig {
    int spatial_res = 100;   ///< nodes per spatial axis at the coarsest scale
    int temporal_res = 8;    ///< nodes along time, shared by every scale
    int feature_dim = 16;    ///< channels per plane
    int num_scales = 2;      ///< spatial resolution doubles at each further scale
    int hidden_width = 64;
    int hidden_layers = 2;   ///< 0 gives linear heads
    double scale_floor = 1e-6;

    /// Small grid for unit tests and quick runs.
    static HexPlaneConfig desk() { return {16, 8, 4, 1, 64, 2, 1e-6}; }
};

inline void validate(const HexPlaneConfig& c)
{
    detail::require(c.spatial_res >= 2 && c.temporal_res >= 2, "hexplane resolutions must be at least 2");
    detail::require(c.feature_dim >= 1 && c.num_scales >= 1, "hexplane needs positive feature dim and scale count");
    detail::require(c.hidden_layers >= 0 && (c.hidden_layers == 0 || c.hidden_width >= 1),
                    "hexplane head shape is invalid");
    detail::require(c.scale_floor > 0.0, "scale floor must be positive");
}

/// Plane axis pairs in storage order; axis 3 is time.
inline constexpr std::array<std::array<int, 2>, 6> kPlaneAxes = {{{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};

struct MotionOffsets {
    Vec3 position = Vec3::Zero();
    Quat rotation = Quat::Zero();
    Vec3 scale = Vec3::Zero();
};

/// A GaussianCloud evaluated at one timestamp.
struct DeformedCloud {
    GaussianCloud cloud;
    double time = 0.0;
};

/// Six-plane factorized feature grid per scale plus three offset heads
/// (position: 3, rotation: 4, scale: 3 outputs).
class HexPlaneField {
public:
    HexPlaneField() = default;

    HexPlaneField(const HexPlaneConfig& config, const SceneBounds& bounds, std::uint64_t seed = 0)
        : config_(config), bounds_(bounds)
    {
        validate(config_);
        layout();
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> near_one(0.9, 1.1);
        for (auto& v : planes_) v = near_one(rng);
        for (int h = 0; h < 3; ++h) heads_view_[h].initialize(head_span(h), rng, /*zero_last=*/true);
    }

    [[nodiscard]] const HexPlaneConfig& config() const { return config_; }
    [[nodiscard]] const SceneBounds& bounds() const { return bounds_; }
    [[nodiscard]] int feature_width() const { return config_.num_scales * config_.feature_dim; }

    [[nodiscard]] std::span<double> plane_values() { return planes_; }
    [[nodiscard]] std::span<const double> plane_values() const { return planes_; }
    [[nodiscard]] std::span<double> head_values() { return heads_; }
    [[nodiscard]] std::span<const double> head_values() const { return heads_; }

    /// Disjoint, exhaustive partition of every trainable value: {planes, heads}.
    [[nodiscard]] std::vector<ParamGroup> parameters() { return {{"planes", planes_}, {"heads", heads_}}; }

    [[nodiscard]] std::size_t parameter_count() const { return planes_.size() + heads_.size(); }

    /// Resolution (first axis, second axis) of plane `p` at scale `l`.
    [[nodiscard]] std::array<int, 2> plane_shape(int l, int p) const
    {
        return {axis_res(l, kPlaneAxes[p][0]), axis_res(l, kPlaneAxes[p][1])};
    }
    /// Offset of plane (l, p) inside plane_values(); entries are [a][b][channel].
    [[nodiscard]] std::size_t plane_offset(int l, int p) const { return plane_offsets_[l * 6 + p]; }

    /// Index of head h (0 position, 1 rotation, 2 scale) as an MLP over the feature vector.
    [[nodiscard]] const MlpView& head(int h) const { return heads_view_[h]; }
    [[nodiscard]] std::span<double> head_span(int h)
    {
        return std::span<double>(heads_).subspan(head_offsets_[h], heads_view_[h].param_count());
    }
    [[nodiscard]] std::span<const double> head_span(int h) const
    {
        return std::span<const double>(heads_).subspan(head_offsets_[h], heads_view_[h].param_count());
    }

    /// Grid coordinates of a query: three spatial axes clamped into the bounds, then time.
    [[nodiscard]] std::array<double, 4> grid_coords(const Vec3& position, double time, int scale) const
    {
        const Vec3 u = bounds_.normalize(position);
        std::array<double, 4> g{};
        for (int a = 0; a < 3; ++a) g[a] = (std::clamp(u[a], -1.0, 1.0) + 1.0) / 2.0 * (axis_res(scale, a) - 1);
        g[3] = std::clamp(time, 0.0, 1.0) * (config_.temporal_res - 1);
        return g;
    }

    /// Per scale: bilinear lookup in each of the six planes, elementwise product of the
    /// six results; scales are concatenated.
    [[nodiscard]] Eigen::VectorXd interpolate_feature(const Vec3& position, double time) const
    {
        Eigen::VectorXd feature(feature_width());
        const int c = config_.feature_dim;
        for (int l = 0; l < config_.num_scales; ++l) {
            const auto g = grid_coords(position, time, l);
            Eigen::VectorXd prod = Eigen::VectorXd::Ones(c);
            for (int p = 0; p < 6; ++p) prod.array() *= lookup(l, p, g).array();
            feature.segment(l * c, c) = prod;
        }
        return feature;
    }

    /// Accumulates d/d-planes given d/d-feature for one query.
    void interpolate_feature_backward(const Vec3& position, double time, const Eigen::VectorXd& grad_feature,
                                      std::span<double> grad_planes) const
    {
        const int c = config_.feature_dim;
        std::array<Eigen::VectorXd, 6> values;
        for (int l = 0; l < config_.num_scales; ++l) {
            const auto g = grid_coords(position, time, l);
            for (int p = 0; p < 6; ++p) values[p] = lookup(l, p, g);
            const Eigen::VectorXd upstream = grad_feature.segment(l * c, c);
            for (int p = 0; p < 6; ++p) {
                Eigen::VectorXd others = upstream;
                for (int q = 0; q < 6; ++q)
                    if (q != p) others.array() *= values[q].array();
                scatter(l, p, g, others, grad_planes);
            }
        }
    }

    [[nodiscard]] MotionOffsets predict_offsets(const Vec3& position, double time) const
    {
        const Eigen::MatrixXd feature = interpolate_feature(position, time).transpose();
        MotionOffsets out;
        out.position = heads_view_[0].forward(head_span(0), feature).row(0).transpose();
        out.rotation = heads_view_[1].forward(head_span(1), feature).row(0).transpose();
        out.scale = heads_view_[2].forward(head_span(2), feature).row(0).transpose();
        return out;
    }

private:
    void layout()
    {
        plane_offsets_.clear();
        std::size_t total = 0;
        for (int l = 0; l < config_.num_scales; ++l)
            for (int p = 0; p < 6; ++p) {
                plane_offsets_.push_back(total);
                const auto shape = plane_shape(l, p);
                total += static_cast<std::size_t>(shape[0]) * shape[1] * config_.feature_dim;
            }
        planes_.assign(total, 1.0);

        const std::array<int, 3> outs = {3, 4, 3};
        std::size_t head_total = 0;
        for (int h = 0; h < 3; ++h) {
            std::vector<int> sizes = {feature_width()};
            for (int k = 0; k < config_.hidden_layers; ++k) sizes.push_back(config_.hidden_width);
            sizes.push_back(outs[h]);
            heads_view_[h] = MlpView(sizes);
            head_offsets_[h] = head_total;
            head_total += heads_view_[h].param_count();
        }
        heads_.assign(head_total, 0.0);
    }

    [[nodiscard]] int axis_res(int scale, int axis) const
    {
        return axis == 3 ? config_.temporal_res : config_.spatial_res << scale;
    }

    struct Corner {
        std::size_t index;
        double weight;
    };

    [[nodiscard]] std::array<Corner, 4> corners(int l, int p, const std::array<double, 4>& g) const
    {
        const auto shape = plane_shape(l, p);
        const double ga = g[kPlaneAxes[p][0]], gb = g[kPlaneAxes[p][1]];
        const int ia = std::min(static_cast<int>(ga), shape[0] - 2);
        const int ib = std::min(static_cast<int>(gb), shape[1] - 2);
        const double fa = ga - ia, fb = gb - ib;
        const std::size_t base = plane_offset(l, p);
        const std::size_t c = config_.feature_dim;
        auto idx = [&](int a, int b) { return base + (static_cast<std::size_t>(a) * shape[1] + b) * c; };
        return {{{idx(ia, ib), (1 - fa) * (1 - fb)},
                 {idx(ia + 1, ib), fa * (1 - fb)},
                 {idx(ia, ib + 1), (1 - fa) * fb},
                 {idx(ia + 1, ib + 1), fa * fb}}};
    }

    [[nodiscard]] Eigen::VectorXd lookup(int l, int p, const std::array<double, 4>& g) const
    {
        const int c = config_.feature_dim;
        Eigen::VectorXd v = Eigen::VectorXd::Zero(c);
        for (const auto& corner : corners(l, p, g))
            v += corner.weight * Eigen::Map<const Eigen::VectorXd>(planes_.data() + corner.index, c);
        return v;
    }

    void scatter(int l, int p, const std::array<double, 4>& g, const Eigen::VectorXd& grad,
                 std::span<double> grad_planes) const
    {
        const int c = config_.feature_dim;
        for (const auto& corner : corners(l, p, g))
            Eigen::Map<Eigen::VectorXd>(grad_planes.data() + corner.index, c) += corner.weight * grad;
    }

    HexPlaneConfig config_;
    SceneBounds bounds_;
    std::vector<double> planes_;
    std::vector<double> heads_;
    std::vector<std::size_t> plane_offsets_;
    std::array<MlpView, 3> heads_view_;
    std::array<std::size_t, 3> head_offsets_{};
};

// ---------------------------------------------------------------------------
// Deformation

/// Applies predicted offsets to one Gaussian's attributes. Colors and opacities are not
/// touched by the field.
inline void apply_offsets(const MotionOffsets& d, const Vec3& position, const Quat& rotation, const Vec3& scale,
                          double floor, Vec3& out_position, Quat& out_rotation, Vec3& out_scale)
{
    out_position = position + d.position;
    const Quat raw = rotation + d.rotation;
    out_rotation = d.rotation.isZero(0.0) ? rotation : Quat(raw / raw.norm());
    out_scale = (scale + d.scale).cwiseMax(floor);
}

/// Per-(time, gaussian) intermediates retained so gradients can be pushed back to the field.
struct DeformTape {
    std::vector<double> times;
    std::vector<DeformedCloud> frames;
    Eigen::MatrixXd features;                 ///< rows ordered (time, gaussian)
    std::array<MlpView::Tape, 3> head_tapes;
    std::vector<Quat> raw_rotations;          ///< r + dr before renormalization, same row order
    std::vector<Vec3> raw_scales;             ///< s + ds before flooring
};

/// Gradients of a loss w.r.t. deformed attributes at every (time, gaussian).
struct DeformedGrads {
    std::vector<Vec3> positions;
    std::vector<Quat> rotations;
    std::vector<Vec3> scales;

    explicit DeformedGrads(std::size_t n = 0)
        : positions(n, Vec3::Zero()), rotations(n, Quat::Zero()), scales(n, Vec3::Zero())
    {
    }
};

/// Evaluates the field at every Gaussian for each timestamp in one batch.
inline DeformTape deform_batch(const GaussianCloud& cloud, const HexPlaneField& field, std::span<const double> times)
{
    const std::size_t n = cloud.size();
    const std::size_t rows = n * times.size();
    DeformTape tape;
    tape.times.assign(times.begin(), times.end());
    tape.features.resize(static_cast<Eigen::Index>(rows), field.feature_width());
    for (std::size_t ti = 0; ti < times.size(); ++ti)
        for (std::size_t i = 0; i < n; ++i)
            tape.features.row(static_cast<Eigen::Index>(ti * n + i)) =
                field.interpolate_feature(cloud.positions[i], times[ti]).transpose();

    std::array<Eigen::MatrixXd, 3> out;
    for (int h = 0; h < 3; ++h) out[h] = field.head(h).forward(field.head_span(h), tape.features, &tape.head_tapes[h]);

    tape.raw_rotations.resize(rows);
    tape.raw_scales.resize(rows);
    tape.frames.resize(times.size());
    const double floor = field.config().scale_floor;
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        auto& frame = tape.frames[ti];
        frame.time = times[ti];
        frame.cloud = cloud;
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = static_cast<Eigen::Index>(ti * n + i);
            MotionOffsets d;
            d.position = out[0].row(r).transpose();
            d.rotation = out[1].row(r).transpose();
            d.scale = out[2].row(r).transpose();
            apply_offsets(d, cloud.positions[i], cloud.rotations[i], cloud.scales[i], floor, frame.cloud.positions[i],
                          frame.cloud.rotations[i], frame.cloud.scales[i]);
            tape.raw_rotations[r] = cloud.rotations[i] + d.rotation;
            tape.raw_scales[r] = cloud.scales[i] + d.scale;
        }
    }
    return tape;
}

/// Positions + dX, rotations renormalized after r + dr (a zero dr keeps r as is), scales floored; colors and
/// opacities copied unchanged.
inline DeformedCloud deform(const GaussianCloud& cloud, const HexPlaneField& field, double time)
{
    const double t[1] = {time};
    return std::move(deform_batch(cloud, field, t).frames.front());
}

/// Pushes d/d-deformed-attributes (rows ordered (time, gaussian)) back to the field's
/// plane and head parameters. Gradients are accumulated into the given buffers.
inline void deform_backward(const GaussianCloud& cloud, const HexPlaneField& field, const DeformTape& tape,
                            const DeformedGrads& grads, std::span<double> grad_planes, std::span<double> grad_heads)
{
    const std::size_t n = cloud.size();
    const std::size_t rows = n * tape.times.size();
    detail::require(grads.positions.size() == rows && grads.rotations.size() == rows && grads.scales.size() == rows,
                    "deform_backward: gradient count does not match the tape");
    const double floor = field.config().scale_floor;

    std::array<Eigen::MatrixXd, 3> g_out = {Eigen::MatrixXd(rows, 3), Eigen::MatrixXd(rows, 4),
                                            Eigen::MatrixXd(rows, 3)};
    for (std::size_t r = 0; r < rows; ++r) {
        const auto ri = static_cast<Eigen::Index>(r);
        g_out[0].row(ri) = grads.positions[r].transpose();
        g_out[1].row(ri) = normalize_backward(tape.raw_rotations[r], grads.rotations[r]).transpose();
        for (int a = 0; a < 3; ++a) g_out[2](ri, a) = tape.raw_scales[r][a] > floor ? grads.scales[r][a] : 0.0;
    }

    Eigen::MatrixXd g_feature = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), field.feature_width());
    std::size_t offset = 0;
    for (int h = 0; h < 3; ++h) {
        const std::size_t count = field.head(h).param_count();
        g_feature += field.head(h).backward(field.head_span(h), tape.head_tapes[h], g_out[h],
                                            grad_heads.subspan(offset, count));
        offset += count;
    }
    for (std::size_t ti = 0; ti < tape.times.size(); ++ti)
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = static_cast<Eigen::Index>(ti * n + i);
            if (g_feature.row(r).isZero(0.0)) continue;
            field.interpolate_feature_backward(cloud.positions[i], tape.times[ti], g_feature.row(r).transpose(),
                                               grad_planes);
        }
}

// ---------------------------------------------------------------------------
// Checkpoint: tagged blob, header carries the layout, payload is planes then heads.

inline constexpr std::string_view kFieldMagic = "A4DFIELD";

inline void save_field(const HexPlaneField& field, const fs::path& path)
{
    const auto& c = field.config();
    Blob blob;
    blob.header = {{"format", "animate4d-hexplane"},
                   {"version", 1},
                   {"spatial_res", c.spatial_res},
                   {"temporal_res", c.temporal_res},
                   {"feature_dim", c.feature_dim},
                   {"num_scales", c.num_scales},
                   {"hidden_width", c.hidden_width},
                   {"hidden_layers", c.hidden_layers},
                   {"scale_floor", c.scale_floor},
                   {"bounds_min", {field.bounds().min.x(), field.bounds().min.y(), field.bounds().min.z()}},
                   {"bounds_max", {field.bounds().max.x(), field.bounds().max.y(), field.bounds().max.z()}},
                   {"groups", {{{"name", "planes"}, {"count", field.plane_values().size()}},
                               {{"name", "heads"}, {"count", field.head_values().size()}}}}};
    blob.payload.assign(field.plane_values().begin(), field.plane_values().end());
    blob.payload.insert(blob.payload.end(), field.head_values().begin(), field.head_values().end());
    save_blob(path, kFieldMagic, blob);
}

inline HexPlaneField load_field(const fs::path& path)
{
    const Blob blob = load_blob(path, kFieldMagic);
    const auto& h = blob.header;
    try {
        HexPlaneConfig c;
        c.spatial_res = h.at("spatial_res");
        c.temporal_res = h.at("temporal_res");
        c.feature_dim = h.at("feature_dim");
        c.num_scales = h.at("num_scales");
        c.hidden_width = h.at("hidden_width");
        c.hidden_layers = h.at("hidden_layers");
        c.scale_floor = h.at("scale_floor");
        const auto lo = h.at("bounds_min").get<std::vector<double>>();
        const auto hi = h.at("bounds_max").get<std::vector<double>>();
        detail::require(lo.size() == 3 && hi.size() == 3, "field checkpoint bounds must have three entries");
        SceneBounds b;
        b.min = {lo[0], lo[1], lo[2]};
        b.max = {hi[0], hi[1], hi[2]};
        HexPlaneField field(c, b);
        const auto planes = field.plane_values();
        const auto heads = field.head_values();
        if (blob.payload.size() != planes.size() + heads.size())
            throw ValidationError("field checkpoint payload does not match its header layout");
        std::copy(blob.payload.begin(), blob.payload.begin() + static_cast<std::ptrdiff_t>(planes.size()), planes.begin());
        std::copy(blob.payload.begin() + static_cast<std::ptrdiff_t>(planes.size()), blob.payload.end(), heads.begin());
        return field;
    } catch (const json::exception& e) {
        throw ValidationError("bad field checkpoint header: " + std::string(e.what()));
    }
}

} // namespace animate4d
