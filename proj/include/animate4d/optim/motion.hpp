#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/io.hpp"
#include "animate4d/core/types.hpp"
#include "animate4d/hexplane/field.hpp"
#include "animate4d/losses/arap.hpp"
#include "animate4d/losses/recon.hpp"
#include "animate4d/losses/sds.hpp"
#include "animate4d/mvvdm/latent.hpp"
#include "animate4d/optim/adam.hpp"
#include "animate4d/render/splat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace animate4d {

struct TrainConfig {
    int recon_iters = 750;
    int sds_iters = 250;
    double lr_planes = 0.01;
    double lr_heads = 1e-4;
    int views_per_step = 4;
    int frames_per_step = 16;
    int progressive_warmup_iters = -1;  ///< -1: half of recon_iters
    LossWeights weights;
    int sds_resolution = 16;            ///< square render size fed to the latent encoder
    double sds_t_min = 0.02;
    double sds_t_max = 0.6;
    double neighbor_radius = 0.0;       ///< 0: four times the median nearest-neighbor distance
    std::uint64_t seed = 0;
    int checkpoint_every = 0;           ///< 0: no periodic checkpoints
    fs::path checkpoint_dir;
    fs::path snapshot_dir;              ///< receives the field when a non-finite loss aborts training

    [[nodiscard]] int warmup_iters() const
    {
        return progressive_warmup_iters >= 0 ? progressive_warmup_iters : recon_iters / 2;
    }
};

inline void validate(const TrainConfig& c)
{
    detail::require(c.recon_iters >= 1 && c.sds_iters >= 0, "iteration counts must be positive");
    detail::require(c.lr_planes > 0.0 && c.lr_heads > 0.0, "learning rates must be positive");
    detail::require(c.views_per_step >= 1 && c.frames_per_step >= 2, "views_per_step >= 1 and frames_per_step >= 2");
    detail::require(c.sds_resolution >= 2 && c.sds_resolution % 2 == 0, "sds_resolution must be even and >= 2");
    detail::require(c.neighbor_radius >= 0.0, "neighbor_radius must be non-negative");
    detail::require(c.checkpoint_every >= 0, "checkpoint_every must be non-negative");
    validate(c.weights);
}

struct LossRecord {
    int iteration = 0;
    double rec = 0.0;
    double sds = 0.0;
    double arap = 0.0;
    double total = 0.0;
};

inline void write_loss_csv(const std::vector<LossRecord>& trace, const fs::path& path)
{
    auto out = detail::open_for_write(path);
    out.precision(17);
    out << "iteration,rec,sds,arap,total\n";
    for (const auto& r : trace) out << r.iteration << ',' << r.rec << ',' << r.sds << ',' << r.arap << ',' << r.total << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

/// Number of leading frames supervised at a reconstruction iteration: grows linearly from 2
/// to f over the warmup, then stays at f.
inline int progressive_window(int iteration, int frames, int warmup)
{
    detail::require(frames >= 2, "progressive window needs at least two frames");
    if (warmup <= 0 || iteration >= warmup) return frames;
    const int w = 2 + static_cast<int>(std::floor(static_cast<double>(frames - 2) * iteration / warmup));
    return std::clamp(w, 2, frames);
}

/// Frame indices used at one step: the window [0, window), evenly subsampled to at most
/// per_step entries with an offset that rotates with the iteration.
inline std::vector<int> select_frames(int window, int per_step, int iteration)
{
    std::vector<int> out;
    if (window <= per_step) {
        for (int i = 0; i < window; ++i) out.push_back(i);
        return out;
    }
    const double stride = static_cast<double>(window) / per_step;
    const double offset = std::fmod(iteration * 0.5 * stride, stride);
    for (int k = 0; k < per_step; ++k) out.push_back(std::min(window - 1, static_cast<int>(offset + k * stride)));
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Views used at one step, cycling through the dataset when fewer than all are requested.
inline std::vector<int> select_views(int views, int per_step, int iteration)
{
    std::vector<int> out;
    const int count = std::min(views, per_step);
    for (int k = 0; k < count; ++k) out.push_back((iteration * count + k) % views);
    return out;
}

/// Same camera looking at the same scene at another square resolution.
inline Camera rescale_camera(const Camera& cam, int width, int height)
{
    Camera out = cam;
    const double sx = static_cast<double>(width) / cam.width;
    const double sy = static_cast<double>(height) / cam.height;
    out.fx *= sx;
    out.fy *= sy;
    out.cx = (cam.cx + 0.5) * sx - 0.5;
    out.cy = (cam.cy + 0.5) * sy - 0.5;
    out.width = width;
    out.height = height;
    return out;
}

/// Positions of every Gaussian at each timestamp.
inline std::vector<std::vector<Vec3>> extract_positions(const GaussianCloud& cloud, const HexPlaneField& field,
                                                        std::span<const double> times)
{
    const DeformTape tape = deform_batch(cloud, field, times);
    std::vector<std::vector<Vec3>> out;
    for (const auto& f : tape.frames) out.push_back(f.cloud.positions);
    return out;
}

/// Holds the static cloud, the field being trained, and the Adam state so the SDS stage
/// continues from the reconstruction stage without resetting moments.
class MotionOptimizer {
public:
    MotionOptimizer(const GaussianCloud& cloud, HexPlaneField& field, const FrameDataset& data, TrainConfig cfg)
        : cloud_(cloud), field_(&field), data_(&data), cfg_(std::move(cfg)), rng_(cfg_.seed)
    {
        validate(cloud_);
        validate(*data_);
        validate(cfg_);
        const double radius = cfg_.neighbor_radius > 0.0 ? cfg_.neighbor_radius
                              : cloud_.size() >= 2   ? default_neighbor_radius(cloud_.positions)
                                                     : 1.0;
        graph_ = build_neighbor_graph(cloud_, radius);
        adam_ = AdamState::like(field_->parameters());
    }

    [[nodiscard]] const std::vector<LossRecord>& trace() const { return trace_; }
    [[nodiscard]] int iteration() const { return iteration_; }
    [[nodiscard]] const NeighborGraph& graph() const { return graph_; }
    [[nodiscard]] const TrainConfig& config() const { return cfg_; }
    [[nodiscard]] const AdamState& adam() const { return adam_; }

    /// Runs cfg.recon_iters steps of weighted reconstruction + ARAP with the progressive window.
    const std::vector<LossRecord>& reconstruct_motion()
    {
        for (int k = 0; k < cfg_.recon_iters; ++k) step(nullptr, k);
        return trace_;
    }

    /// Runs cfg.sds_iters steps of the full objective. The window is complete at this point.
    /// With a zero SDS weight or no predictor the SDS term is skipped entirely.
    const std::vector<LossRecord>& refine_with_sds(NoisePredictor* predictor)
    {
        for (int k = 0; k < cfg_.sds_iters; ++k) step(predictor, cfg_.recon_iters + k);
        return trace_;
    }

    /// One optimizer step. `schedule_iteration` drives the window and view/frame selection.
    LossRecord step(NoisePredictor* predictor, int schedule_iteration)
    {
        const int f = static_cast<int>(data_->num_frames());
        const int window = schedule_iteration < cfg_.recon_iters
                               ? progressive_window(schedule_iteration, f, cfg_.warmup_iters())
                               : f;
        const auto frames = select_frames(window, cfg_.frames_per_step, schedule_iteration);
        const auto views = select_views(static_cast<int>(data_->num_views()), cfg_.views_per_step, schedule_iteration);

        std::vector<double> times;
        for (int i : frames) times.push_back(data_->times[static_cast<std::size_t>(i)]);
        const DeformTape tape = deform_batch(cloud_, *field_, times);
        const std::size_t n = cloud_.size();
        DeformedGrads dgrads(n * times.size());

        LossRecord rec;
        rec.iteration = iteration_;
        const auto& w = cfg_.weights;

        // Reconstruction over the selected (view, frame) pairs.
        for (std::size_t fi = 0; fi < frames.size(); ++fi) {
            const auto& deformed = tape.frames[fi].cloud;
            for (int v : views) {
                const auto& cam = data_->views[static_cast<std::size_t>(v)];
                const RenderOutput out = render(deformed, cam);
                ReconTerm term = recon_loss(out.rgb, out.mask, data_->frames[v][frames[fi]], data_->masks[v][frames[fi]]);
                rec.rec += term.loss;
                if (w.rec == 0.0) continue;
                for (auto& g : term.grad_rgb.data) g *= w.rec;
                for (auto& g : term.grad_mask.data) g *= w.rec;
                accumulate(render_backward(deformed, cam, out, term.grad_rgb, term.grad_mask), dgrads, fi);
            }
        }

        // ARAP against the static cloud over the same frames.
        {
            std::vector<std::vector<Vec3>> traj;
            traj.push_back(cloud_.positions);
            for (const auto& fr : tape.frames) traj.push_back(fr.cloud.positions);
            const ArapResult arap = arap_loss(traj, graph_);
            rec.arap = arap.loss;
            if (w.arap != 0.0)
                for (std::size_t fi = 0; fi < frames.size(); ++fi)
                    for (std::size_t i = 0; i < n; ++i) dgrads.positions[fi * n + i] += w.arap * arap.grads[fi][i];
        }

        std::vector<double> grad_planes(field_->plane_values().size(), 0.0);
        std::vector<double> grad_heads(field_->head_values().size(), 0.0);
        deform_backward(cloud_, *field_, tape, dgrads, grad_planes, grad_heads);

        if (predictor != nullptr && w.sds != 0.0) rec.sds = sds_term(*predictor, grad_planes, grad_heads);

        rec.total = w.rec * rec.rec + w.sds * rec.sds + w.arap * rec.arap;
        if (!std::isfinite(rec.total) || !all_finite(grad_planes) || !all_finite(grad_heads)) abort_non_finite(rec);

        GradBuffers grads;
        grads.groups = {std::move(grad_planes), std::move(grad_heads)};
        const double lrs[2] = {cfg_.lr_planes, cfg_.lr_heads};
        adam_step(field_->parameters(), grads, adam_, lrs);

        trace_.push_back(rec);
        ++iteration_;
        if (cfg_.checkpoint_every > 0 && !cfg_.checkpoint_dir.empty() && iteration_ % cfg_.checkpoint_every == 0)
            save_field(*field_, cfg_.checkpoint_dir / ("field_" + std::to_string(iteration_) + ".a4df"));
        return rec;
    }

private:
    static bool all_finite(const std::vector<double>& v)
    {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    }

    void accumulate(const RenderGrads& g, DeformedGrads& dg, std::size_t frame_slot) const
    {
        const std::size_t n = cloud_.size();
        for (std::size_t i = 0; i < n; ++i) {
            dg.positions[frame_slot * n + i] += g.positions[i];
            dg.rotations[frame_slot * n + i] += g.rotations[i];
            dg.scales[frame_slot * n + i] += g.scales[i];
        }
    }

    /// Renders every view at every frame at SDS resolution, encodes to a latent, distills,
    /// and accumulates the weighted gradient into the field buffers. Returns the SDS loss.
    double sds_term(NoisePredictor& predictor, std::vector<double>& grad_planes, std::vector<double>& grad_heads)
    {
        const std::size_t nv = data_->num_views(), nf = data_->num_frames(), n = cloud_.size();
        const DeformTape tape = deform_batch(cloud_, *field_, data_->times);
        std::vector<Camera> cams;
        for (const auto& c : data_->views) cams.push_back(rescale_camera(c, cfg_.sds_resolution, cfg_.sds_resolution));

        std::vector<std::vector<RenderOutput>> renders(nv);
        std::vector<std::vector<Image>> images(nv);
        for (std::size_t v = 0; v < nv; ++v)
            for (std::size_t f = 0; f < nf; ++f) {
                renders[v].push_back(render(tape.frames[f].cloud, cams[v]));
                images[v].push_back(renders[v][f].rgb);
            }
        const LatentVideo z = encode_latent(images);
        const NoiseSchedule schedule = NoiseSchedule::linear();
        const int t = sample_sds_timestep(schedule, cfg_.sds_t_min, cfg_.sds_t_max, rng_);
        const SdsResult sds = sds_loss(z, predictor, t, schedule, rng_, cams);

        LatentVideo gz = sds.grad;
        for (auto& g : gz.data()) g *= cfg_.weights.sds;
        const auto grad_images = decode_latent(gz);
        DeformedGrads dgrads(n * nf);
        for (std::size_t v = 0; v < nv; ++v)
            for (std::size_t f = 1; f < nf; ++f) {
                const Image zero_mask(cfg_.sds_resolution, cfg_.sds_resolution, 1);
                accumulate(render_backward(tape.frames[f].cloud, cams[v], renders[v][f], grad_images[v][f], zero_mask),
                           dgrads, f);
            }
        deform_backward(cloud_, *field_, tape, dgrads, grad_planes, grad_heads);
        return sds.loss;
    }

    [[noreturn]] void abort_non_finite(const LossRecord& rec) const
    {
        std::string where = "non-finite loss or gradient at iteration " + std::to_string(rec.iteration) +
                            " (rec=" + std::to_string(rec.rec) + ", sds=" + std::to_string(rec.sds) +
                            ", arap=" + std::to_string(rec.arap) + ")";
        if (!cfg_.snapshot_dir.empty()) {
            fs::create_directories(cfg_.snapshot_dir);
            const fs::path snap = cfg_.snapshot_dir / "nonfinite_snapshot.a4df";
            save_field(*field_, snap);
            where += "; field snapshot written to " + snap.string();
        }
        throw NumericError(where);
    }

    GaussianCloud cloud_;
    HexPlaneField* field_;
    const FrameDataset* data_;
    TrainConfig cfg_;
    std::mt19937_64 rng_;
    NeighborGraph graph_;
    AdamState adam_;
    std::vector<LossRecord> trace_;
    int iteration_ = 0;
};

/// Reconstruction stage alone; returns the loss trace.
inline std::vector<LossRecord> reconstruct_motion(const GaussianCloud& cloud, HexPlaneField& field,
                                                  const FrameDataset& data, const TrainConfig& cfg)
{
    MotionOptimizer opt(cloud, field, data, cfg);
    return opt.reconstruct_motion();
}

/// SDS stage alone, starting from fresh Adam moments. Use MotionOptimizer to run both
/// stages with one optimizer state.
inline std::vector<LossRecord> refine_with_sds(const GaussianCloud& cloud, HexPlaneField& field,
                                               const FrameDataset& data, NoisePredictor& denoiser,
                                               const TrainConfig& cfg)
{
    MotionOptimizer opt(cloud, field, data, cfg);
    return opt.refine_with_sds(&denoiser);
}

} // namespace animate4d
