#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/io.hpp"
#include "animate4d/core/png.hpp"
#include "animate4d/core/quaternion.hpp"
#include "animate4d/core/types.hpp"
#include "animate4d/render/splat.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace animate4d {

enum class MotionKind { RigidRotation, Translation, SinusoidalBend, Composite };

inline MotionKind parse_motion_kind(const std::string& s)
{
    if (s == "rigid-rotation") return MotionKind::RigidRotation;
    if (s == "translation") return MotionKind::Translation;
    if (s == "sinusoidal-bend") return MotionKind::SinusoidalBend;
    if (s == "composite") return MotionKind::Composite;
    throw ValidationError("unknown motion kind '" + s +
                          "' (expected rigid-rotation, translation, sinusoidal-bend or composite)");
}

inline std::string to_string(MotionKind k)
{
    switch (k) {
    case MotionKind::RigidRotation: return "rigid-rotation";
    case MotionKind::Translation: return "translation";
    case MotionKind::SinusoidalBend: return "sinusoidal-bend";
    case MotionKind::Composite: return "composite";
    }
    return "?";
}

/// Evenly spaced azimuths on a circle around the object at a fixed elevation.
struct OrbitSpec {
    double azimuth_start_deg = 0.0;
    double azimuth_step_deg = 90.0;
    double elevation_deg = 15.0;
    double radius = 3.0;
    double fov_deg = 40.0;
    int resolution = 64;
};

/// amplitude units: degrees (rigid-rotation), scene units of total travel (translation),
/// scene units of peak displacement (sinusoidal-bend). Composite rotates by `amplitude`
/// degrees and adds a bend whose peak equals the rotation's arc length at the cloud radius.
struct SyntheticMotionSpec {
    MotionKind kind = MotionKind::RigidRotation;
    double amplitude = 15.0;
    Vec3 axis = Vec3::UnitY();
    int frames = 16;
    int views = 4;
    OrbitSpec orbit;
};

inline void validate(const SyntheticMotionSpec& s)
{
    detail::require(s.frames >= 2, "synthetic motion needs at least two frames");
    detail::require(s.views >= 1, "synthetic motion needs at least one view");
    detail::require(std::isfinite(s.amplitude), "motion amplitude must be finite");
    detail::require(s.axis.allFinite() && s.axis.norm() > 0.0, "motion axis must be a non-zero vector");
    detail::require(s.orbit.resolution >= 2 && s.orbit.radius > 0.0 && s.orbit.fov_deg > 0.0 && s.orbit.fov_deg < 180.0,
                    "orbit needs resolution >= 2, radius > 0 and fov in (0, 180)");
}

inline Vec3 centroid(const std::vector<Vec3>& pts)
{
    Vec3 c = Vec3::Zero();
    for (const auto& p : pts) c += p;
    return c / static_cast<double>(pts.size());
}

inline std::vector<Camera> orbit_cameras(const OrbitSpec& o, int views, const Vec3& target)
{
    const double deg = std::numbers::pi / 180.0;
    const double focal = 0.5 * o.resolution / std::tan(0.5 * o.fov_deg * deg);
    std::vector<Camera> cams;
    for (int v = 0; v < views; ++v) {
        const double az = (o.azimuth_start_deg + v * o.azimuth_step_deg) * deg;
        const double el = o.elevation_deg * deg;
        const Vec3 eye = target + o.radius * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
        cams.push_back(look_at(eye, target, o.resolution, o.resolution, focal));
    }
    return cams;
}

/// Applies the analytic motion at normalized time t. Rotations of the Gaussians follow the
/// rigid part; the bend moves positions only.
inline GaussianCloud apply_motion(const GaussianCloud& rest, const SyntheticMotionSpec& spec, double t)
{
    GaussianCloud out = rest;
    const Vec3 axis = spec.axis.normalized();
    const Vec3 c = centroid(rest.positions);
    double radius = 0.0;
    for (const auto& p : rest.positions) radius = std::max(radius, (p - c).norm());
    if (radius <= 0.0) radius = 1.0;
    const Vec3 side = (std::abs(axis.x()) < 0.9 ? axis.cross(Vec3::UnitX()) : axis.cross(Vec3::UnitY())).normalized();
    const double deg = std::numbers::pi / 180.0;

    auto rotate = [&](double degrees) {
        const Quat q = axis_angle_quat(axis, degrees * deg * t);
        const Mat3 r = quat_to_matrix(q);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out.positions[i] = c + r * (out.positions[i] - c);
            out.rotations[i] = quat_multiply(q, out.rotations[i]);
        }
    };
    auto bend = [&](double peak) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double h = (rest.positions[i] - c).dot(axis) / radius;
            out.positions[i] += peak * std::sin(std::numbers::pi * t) * h * h * side;
        }
    };
    switch (spec.kind) {
    case MotionKind::RigidRotation: rotate(spec.amplitude); break;
    case MotionKind::Translation:
        for (auto& p : out.positions) p += spec.amplitude * t * axis;
        break;
    case MotionKind::SinusoidalBend: bend(spec.amplitude); break;
    case MotionKind::Composite:
        rotate(spec.amplitude);
        bend(spec.amplitude * deg * radius);
        break;
    }
    return out;
}

/// Ground-truth positions indexed [frame][gaussian].
struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<Vec3>> positions;
};

struct SyntheticScene {
    FrameDataset data;
    Trajectory truth;
};

inline SyntheticScene synthesize(const GaussianCloud& rest, const SyntheticMotionSpec& spec)
{
    validate(rest);
    validate(spec);
    SyntheticScene s;
    s.data.times = uniform_times(static_cast<std::size_t>(spec.frames));
    s.data.views = orbit_cameras(spec.orbit, spec.views, centroid(rest.positions));
    s.data.frames.assign(spec.views, {});
    s.data.masks.assign(spec.views, {});
    s.truth.times = s.data.times;
    for (double t : s.data.times) {
        const GaussianCloud moved = apply_motion(rest, spec, t);
        s.truth.positions.push_back(moved.positions);
        for (int v = 0; v < spec.views; ++v) {
            RenderOutput r = render(moved, s.data.views[v]);
            s.data.frames[v].push_back(std::move(r.rgb));
            s.data.masks[v].push_back(std::move(r.mask));
        }
    }
    return s;
}

/// Random blob of Gaussians inside an ellipsoid with position-dependent colors.
inline GaussianCloud make_blob_cloud(std::size_t count, std::uint64_t seed, const Vec3& radii = Vec3(0.6, 0.5, 0.4))
{
    detail::require(count >= 1, "cloud needs at least one Gaussian");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    GaussianCloud c;
    c.resize(count);
    const double volume = 4.0 / 3.0 * std::numbers::pi * radii.prod();
    const double spacing = std::cbrt(volume / static_cast<double>(count));
    for (std::size_t i = 0; i < count; ++i) {
        Vec3 p;
        do p = Vec3(u(rng), u(rng), u(rng));
        while (p.squaredNorm() > 1.0);
        c.positions[i] = p.cwiseProduct(radii);
        c.colors[i] = Vec3(0.5 + 0.45 * p.x(), 0.5 + 0.45 * p.y(), 0.5 - 0.45 * p.z());
        c.opacities[i] = 0.8;
        c.rotations[i] = identity_quat();
        c.scales[i] = Vec3::Constant(0.45 * spacing);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Dataset directories: cameras.json, times.json, frames/view{v}_frame{i}.png,
// masks/view{v}_frame{i}.png, truth.json (optional).

inline std::string frame_name(std::size_t v, std::size_t i)
{
    return "view" + std::to_string(v) + "_frame" + std::to_string(i) + ".png";
}

inline json trajectory_to_json(const Trajectory& t)
{
    json frames = json::array();
    for (const auto& f : t.positions) {
        json pts = json::array();
        for (const auto& p : f) pts.push_back({p.x(), p.y(), p.z()});
        frames.push_back(pts);
    }
    return {{"times", t.times}, {"positions", frames}};
}

inline Trajectory trajectory_from_json(const json& j)
{
    try {
        Trajectory t;
        t.times = j.at("times").get<std::vector<double>>();
        for (const auto& f : j.at("positions")) {
            std::vector<Vec3> pts;
            for (const auto& p : f) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
            t.positions.push_back(std::move(pts));
        }
        if (t.positions.size() != t.times.size()) throw ValidationError("trajectory times and frames differ in count");
        return t;
    } catch (const json::exception& e) {
        throw ValidationError("malformed trajectory JSON: " + std::string(e.what()));
    }
}

/// Writes images as PNG; cameras, times, and (when given) ground truth as JSON.
inline void save_dataset(const FrameDataset& d, const fs::path& dir, const Trajectory* truth = nullptr)
{
    validate(d);
    fs::create_directories(dir / "frames");
    fs::create_directories(dir / "masks");
    save_cameras(d.views, dir / "cameras.json");
    save_json(d.times, dir / "times.json");
    for (std::size_t v = 0; v < d.num_views(); ++v)
        for (std::size_t i = 0; i < d.num_frames(); ++i) {
            write_png(dir / "frames" / frame_name(v, i), d.frames[v][i]);
            write_png(dir / "masks" / frame_name(v, i), d.masks[v][i]);
        }
    if (truth) save_json(trajectory_to_json(*truth), dir / "truth.json");
}

inline FrameDataset load_dataset(const fs::path& dir)
{
    if (!fs::is_directory(dir)) throw ValidationError("dataset directory " + dir.string() + " does not exist");
    for (const char* f : {"cameras.json", "times.json"})
        if (!fs::exists(dir / f)) throw ValidationError("dataset is missing " + (dir / f).string());
    FrameDataset d;
    d.views = load_cameras(dir / "cameras.json");
    try {
        d.times = load_json(dir / "times.json").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ValidationError("times.json must be an array of numbers: " + std::string(e.what()));
    }
    for (std::size_t v = 0; v < d.num_views(); ++v)
        for (std::size_t i = 0; i < d.num_frames(); ++i)
            for (const char* sub : {"frames", "masks"}) {
                const fs::path p = dir / sub / frame_name(v, i);
                if (!fs::exists(p)) throw ValidationError("dataset is missing image " + p.string());
            }
    d.frames.assign(d.num_views(), {});
    d.masks.assign(d.num_views(), {});
    for (std::size_t v = 0; v < d.num_views(); ++v)
        for (std::size_t i = 0; i < d.num_frames(); ++i) {
            Image rgb = read_png(dir / "frames" / frame_name(v, i));
            Image mask = read_png(dir / "masks" / frame_name(v, i));
            if (rgb.channels != 3 || mask.channels != 1)
                throw ValidationError("view " + std::to_string(v) + " frame " + std::to_string(i) +
                                      ": expected RGB frame and single-channel mask");
            d.frames[v].push_back(std::move(rgb));
            d.masks[v].push_back(std::move(mask));
        }
    validate(d);
    return d;
}

} // namespace animate4d
