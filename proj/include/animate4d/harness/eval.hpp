#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/io.hpp"
#include "animate4d/core/types.hpp"
#include "animate4d/harness/synth.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace animate4d {

inline double mean_squared_error(const Image& a, const Image& b)
{
    if (!a.same_shape(b)) throw ValidationError("image shapes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

/// 10 log10(1 / MSE) for images in [0,1]; +infinity for identical images.
inline double psnr_from_mse(double mse)
{
    return mse > 0.0 ? 10.0 * std::log10(1.0 / mse) : std::numeric_limits<double>::infinity();
}

inline double psnr(const Image& a, const Image& b) { return psnr_from_mse(mean_squared_error(a, b)); }

/// Intersection over union of masks thresholded at 0.5; two empty masks give 1.
inline double mask_iou(const Image& a, const Image& b, double threshold = 0.5)
{
    if (!a.same_shape(b)) throw ValidationError("mask shapes differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool pa = a.data[i] >= threshold, pb = b.data[i] >= threshold;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Root mean squared point distance over every frame and point.
inline double trajectory_rmse(const std::vector<std::vector<Vec3>>& a, const std::vector<std::vector<Vec3>>& b)
{
    if (a.size() != b.size() || a.empty()) throw ValidationError("trajectories differ in frame count");
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t f = 0; f < a.size(); ++f) {
        if (a[f].size() != b[f].size()) throw ValidationError("trajectories differ in point count");
        for (std::size_t i = 0; i < a[f].size(); ++i) s += (a[f][i] - b[f][i]).squaredNorm();
        n += a[f].size();
    }
    return n == 0 ? 0.0 : std::sqrt(s / static_cast<double>(n));
}

struct PairMetrics {
    std::size_t view = 0, frame = 0;
    double psnr = 0.0;
    double iou = 0.0;
};

struct EvalReport {
    std::vector<PairMetrics> pairs;
    double mean_psnr = 0.0;  ///< from the MSE pooled over every pair
    double mean_iou = 0.0;
    std::optional<double> trajectory_rmse;
    std::optional<double> extent;
    double wall_clock_seconds = 0.0;
};

inline json psnr_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

inline json to_json(const EvalReport& r)
{
    json pairs = json::array();
    for (const auto& p : r.pairs)
        pairs.push_back({{"view", p.view}, {"frame", p.frame}, {"psnr", psnr_json(p.psnr)}, {"iou", p.iou}});
    json j = {{"pairs", pairs},
              {"mean_psnr", psnr_json(r.mean_psnr)},
              {"mean_iou", r.mean_iou},
              {"wall_clock_seconds", r.wall_clock_seconds}};
    if (r.trajectory_rmse) j["trajectory_rmse"] = *r.trajectory_rmse;
    if (r.extent) {
        j["extent"] = *r.extent;
        if (r.trajectory_rmse) j["relative_rmse"] = *r.trajectory_rmse / *r.extent;
    }
    return j;
}

/// Compares two [view][frame] image stacks (RGB and mask) of equal layout.
inline EvalReport evaluate_images(const std::vector<std::vector<Image>>& rgb, const std::vector<std::vector<Image>>& mask,
                                  const FrameDataset& target)
{
    if (rgb.size() != target.num_views() || mask.size() != target.num_views())
        throw ValidationError("evaluate: view count differs from the dataset");
    EvalReport r;
    double mse_sum = 0.0;
    for (std::size_t v = 0; v < rgb.size(); ++v) {
        if (rgb[v].size() != target.num_frames() || mask[v].size() != target.num_frames())
            throw ValidationError("evaluate: frame count differs from the dataset");
        for (std::size_t f = 0; f < rgb[v].size(); ++f) {
            const double mse = mean_squared_error(rgb[v][f], target.frames[v][f]);
            mse_sum += mse;
            r.pairs.push_back({v, f, psnr_from_mse(mse), mask_iou(mask[v][f], target.masks[v][f])});
            r.mean_iou += r.pairs.back().iou;
        }
    }
    r.mean_psnr = psnr_from_mse(mse_sum / static_cast<double>(r.pairs.size()));
    r.mean_iou /= static_cast<double>(r.pairs.size());
    return r;
}

inline EvalReport evaluate_dirs(const fs::path& renders_dir, const FrameDataset& target)
{
    std::vector<std::vector<Image>> rgb(target.num_views()), mask(target.num_views());
    for (std::size_t v = 0; v < target.num_views(); ++v)
        for (std::size_t f = 0; f < target.num_frames(); ++f) {
            const fs::path pf = renders_dir / "frames" / frame_name(v, f);
            const fs::path pm = renders_dir / "masks" / frame_name(v, f);
            if (!fs::exists(pf)) throw ValidationError("renders are missing " + pf.string());
            if (!fs::exists(pm)) throw ValidationError("renders are missing " + pm.string());
            rgb[v].push_back(read_png(pf));
            mask[v].push_back(read_png(pm));
        }
    return evaluate_images(rgb, mask, target);
}

} // namespace animate4d
