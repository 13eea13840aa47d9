#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/quaternion.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace animate4d {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Static splat set. Structure-of-arrays, all vectors share one length.
///   positions: world-space means (scene units)
///   colors:    RGB in [0,1]
///   opacities: [0,1]
///   rotations: unit quaternions (w, x, y, z)
///   scales:    positive per-axis standard deviations (scene units)
struct GaussianCloud {
    std::vector<Vec3> positions;
    std::vector<Vec3> colors;
    std::vector<double> opacities;
    std::vector<Quat> rotations;
    std::vector<Vec3> scales;

    [[nodiscard]] std::size_t size() const { return positions.size(); }

    void resize(std::size_t n)
    {
        positions.resize(n, Vec3::Zero());
        colors.resize(n, Vec3::Zero());
        opacities.resize(n, 1.0);
        rotations.resize(n, identity_quat());
        scales.resize(n, Vec3::Constant(0.01));
    }

    void push_back(const Vec3& position, const Vec3& color, double opacity, const Quat& rotation,
                   const Vec3& scale)
    {
        positions.push_back(position);
        colors.push_back(color);
        opacities.push_back(opacity);
        rotations.push_back(rotation);
        scales.push_back(scale);
    }
};

/// Throws ValidationError naming the first violated invariant.
inline void validate(const GaussianCloud& cloud)
{
    const std::size_t n = cloud.positions.size();
    if (n == 0) throw ValidationError("zero-points: gaussian cloud is empty");
    if (cloud.colors.size() != n || cloud.opacities.size() != n || cloud.rotations.size() != n ||
        cloud.scales.size() != n)
        throw ValidationError("missing-attribute: gaussian attribute arrays differ in length");
    for (std::size_t i = 0; i < n; ++i) {
        const auto where = " at gaussian " + std::to_string(i);
        if (!cloud.positions[i].allFinite() || !cloud.colors[i].allFinite() || !std::isfinite(cloud.opacities[i]) ||
            !cloud.rotations[i].allFinite() || !cloud.scales[i].allFinite())
            throw ValidationError("non-finite value" + where);
        if ((cloud.scales[i].array() <= 0.0).any()) throw ValidationError("non-positive-scale" + where);
        if (cloud.opacities[i] < 0.0 || cloud.opacities[i] > 1.0)
            throw ValidationError("opacity outside [0,1]" + where);
        if (std::abs(cloud.rotations[i].norm() - 1.0) > 1e-6)
            throw ValidationError("rotation quaternion not unit-norm" + where);
    }
}

/// Pinhole camera. Extrinsics map world to camera space; the camera looks down +z,
/// image x to the right and y down. Pixel (u, v) has its center at integer coordinates.
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    int width = 1;
    int height = 1;

    [[nodiscard]] Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
    [[nodiscard]] Vec3 center() const { return -rotation.transpose() * translation; }
};

inline void validate(const Camera& cam)
{
    if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) throw ValidationError("camera focal lengths must be positive");
    if (cam.width <= 0 || cam.height <= 0) throw ValidationError("camera resolution must be positive");
    if (!cam.rotation.allFinite() || !cam.translation.allFinite()) throw ValidationError("camera has non-finite pose");
    if (!(cam.rotation.transpose() * cam.rotation).isApprox(Mat3::Identity(), 1e-6) ||
        std::abs(cam.rotation.determinant() - 1.0) > 1e-6)
        throw ValidationError("camera rotation must be orthonormal with determinant +1");
}

/// Camera at `eye` looking at `target`, with world +y as up.
inline Camera look_at(const Vec3& eye, const Vec3& target, int width, int height, double focal)
{
    const Vec3 forward = (target - eye).normalized();
    Vec3 up = Vec3::UnitY();
    if (std::abs(forward.dot(up)) > 0.999) up = Vec3::UnitZ();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    cam.fx = cam.fy = focal;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    return cam;
}

/// Row-major interleaved image, `channels` values per pixel.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill)
    {
    }

    [[nodiscard]] double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    [[nodiscard]] double at(int x, int y, int c) const
    {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    [[nodiscard]] bool same_shape(const Image& o) const
    {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

/// n views x f frames of supervision. Images are indexed [view][frame].
struct FrameDataset {
    std::vector<Camera> views;
    std::vector<std::vector<Image>> frames; // RGB
    std::vector<std::vector<Image>> masks;  // single channel
    std::vector<double> times;

    [[nodiscard]] std::size_t num_views() const { return views.size(); }
    [[nodiscard]] std::size_t num_frames() const { return times.size(); }
};

inline void validate(const FrameDataset& data)
{
    const std::size_t n = data.views.size(), f = data.times.size();
    if (n < 1) throw ValidationError("dataset needs at least one view");
    if (f < 2) throw ValidationError("dataset needs at least two frames");
    for (const auto& cam : data.views) validate(cam);
    if (data.times.front() != 0.0 || data.times.back() != 1.0)
        throw ValidationError("dataset times must start at 0 and end at 1");
    for (std::size_t i = 1; i < f; ++i)
        if (!(data.times[i] > data.times[i - 1])) throw ValidationError("dataset times must be strictly increasing");
    if (data.frames.size() != n || data.masks.size() != n)
        throw ValidationError("dataset image arrays do not match the view count");
    const int w = data.views[0].width, h = data.views[0].height;
    for (std::size_t v = 0; v < n; ++v) {
        if (data.views[v].width != w || data.views[v].height != h)
            throw ValidationError("all dataset views must share one resolution");
        if (data.frames[v].size() != f || data.masks[v].size() != f)
            throw ValidationError("dataset view " + std::to_string(v) + " does not have one image per frame");
        for (std::size_t i = 0; i < f; ++i) {
            const auto& img = data.frames[v][i];
            const auto& m = data.masks[v][i];
            if (img.width != w || img.height != h || img.channels != 3 || m.width != w || m.height != h ||
                m.channels != 1)
                throw ValidationError("dataset image shape mismatch at view " + std::to_string(v) + " frame " +
                                      std::to_string(i));
        }
    }
}

/// Evenly spaced timestamps over [0,1].
inline std::vector<double> uniform_times(std::size_t frames)
{
    detail::require(frames >= 2, "need at least two frames");
    std::vector<double> t(frames);
    for (std::size_t i = 0; i < frames; ++i) t[i] = static_cast<double>(i) / static_cast<double>(frames - 1);
    t.back() = 1.0;
    return t;
}

/// Axis-aligned box plus the affine map onto [-1,1]^3 used for grid lookups.
struct SceneBounds {
    Vec3 min = -Vec3::Ones();
    Vec3 max = Vec3::Ones();

    [[nodiscard]] Vec3 normalize(const Vec3& p) const
    {
        return (2.0 * (p - min).array() / (max - min).array() - 1.0).matrix();
    }
    [[nodiscard]] Vec3 extent() const { return max - min; }
    [[nodiscard]] bool contains(const Vec3& p) const
    {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
};

inline constexpr double kDegenerateAxisEpsilon = 1e-3;
inline constexpr double kDefaultBoundsMargin = 0.2;

/// Bounding box of the positions, each axis grown by margin * extent. Zero-extent axes
/// become an epsilon-wide slab centered on the data.
inline SceneBounds compute_bounds(const GaussianCloud& cloud, double margin = kDefaultBoundsMargin)
{
    detail::require(cloud.size() > 0, "compute_bounds needs a non-empty cloud");
    detail::require(margin >= 0.0, "bounds margin must be non-negative");
    SceneBounds b;
    b.min = b.max = cloud.positions.front();
    for (const auto& p : cloud.positions) {
        b.min = b.min.cwiseMin(p);
        b.max = b.max.cwiseMax(p);
    }
    for (int a = 0; a < 3; ++a) {
        const double extent = b.max[a] - b.min[a];
        if (extent <= 0.0) {
            b.min[a] -= kDegenerateAxisEpsilon / 2;
            b.max[a] += kDegenerateAxisEpsilon / 2;
        } else {
            b.min[a] -= margin * extent;
            b.max[a] += margin * extent;
        }
    }
    return b;
}

/// Largest side of the positions' bounding box.
inline double cloud_extent(const std::vector<Vec3>& positions)
{
    if (positions.empty()) return 0.0;
    Vec3 lo = positions.front(), hi = positions.front();
    for (const auto& p : positions) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return (hi - lo).maxCoeff();
}

} // namespace animate4d
