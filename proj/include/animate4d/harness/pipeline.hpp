#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/io.hpp"
#include "animate4d/core/png.hpp"
#include "animate4d/harness/config.hpp"
#include "animate4d/harness/eval.hpp"
#include "animate4d/harness/synth.hpp"
#include "animate4d/hexplane/field.hpp"
#include "animate4d/mesh/mesh.hpp"
#include "animate4d/mvvdm/blobs.hpp"
#include "animate4d/mvvdm/denoiser.hpp"
#include "animate4d/optim/motion.hpp"
#include "animate4d/render/splat.hpp"

#include <chrono>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace animate4d {

/// Refuses to write into a non-empty directory unless overwriting was requested.
inline void prepare_out_dir(const fs::path& dir, bool overwrite)
{
    if (dir.empty()) throw ValidationError("output directory must not be empty");
    if (fs::exists(dir) && !fs::is_directory(dir)) throw ValidationError(dir.string() + " exists and is not a directory");
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!overwrite) throw ValidationError(dir.string() + " is not empty; pass --overwrite to replace its contents");
        for (const auto& e : fs::directory_iterator(dir)) fs::remove_all(e.path());
    }
    fs::create_directories(dir);
}

inline double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// synth

struct SynthSource {
    std::optional<fs::path> gaussians;
    std::optional<fs::path> mesh;
    std::size_t generate = 200;   ///< used when neither file is given
    std::uint64_t seed = 0;
};

/// Writes the dataset plus static.gaussians (the cloud the motion was applied to).
inline SyntheticScene run_synth(const SyntheticMotionSpec& spec, const SynthSource& src, const fs::path& out_dir,
                                bool overwrite)
{
    GaussianCloud cloud;
    if (src.gaussians && src.mesh) throw ValidationError("give either a Gaussian file or a mesh, not both");
    if (src.gaussians)
        cloud = load_gaussians(*src.gaussians);
    else if (src.mesh)
        cloud = mesh_to_gaussians(load_obj(*src.mesh));
    else
        cloud = make_blob_cloud(src.generate, src.seed);
    SyntheticScene scene = synthesize(cloud, spec);
    prepare_out_dir(out_dir, overwrite);
    save_dataset(scene.data, out_dir, &scene.truth);
    save_gaussians(cloud, out_dir / "static.gaussians");
    return scene;
}

// ---------------------------------------------------------------------------
// animate

inline ToyDenoiser make_denoiser(const RunConfig& cfg)
{
    if (!cfg.denoiser.empty()) {
        ToyDenoiser d = load_denoiser(cfg.denoiser);
        if (d.config().latent_channels != 12) throw ValidationError("denoiser must take 12 latent channels (RGB 2x2 patches)");
        return d;
    }
    DenoiserConfig dc = cfg.denoiser_config;
    dc.latent_channels = 12;
    return ToyDenoiser(dc, cfg.denoiser_seed);
}

struct AnimateResult {
    std::vector<LossRecord> trace;
    Trajectory trajectory;
    EvalReport report;
};

/// Renders every (view, frame) of a dataset layout from a deformed cloud.
inline void render_all(const GaussianCloud& cloud, const HexPlaneField& field, const std::vector<Camera>& cams,
                       std::span<const double> times, std::vector<std::vector<Image>>& rgb,
                       std::vector<std::vector<Image>>& mask)
{
    const DeformTape tape = deform_batch(cloud, field, times);
    rgb.assign(cams.size(), {});
    mask.assign(cams.size(), {});
    for (std::size_t v = 0; v < cams.size(); ++v)
        for (const auto& frame : tape.frames) {
            RenderOutput r = render(frame.cloud, cams[v]);
            rgb[v].push_back(std::move(r.rgb));
            mask[v].push_back(std::move(r.mask));
        }
}

/// Trains a field on the dataset. Outputs: field.a4df, loss.csv, trajectory.json,
/// report.json, config.json.
inline AnimateResult run_animate(const fs::path& dataset_dir, const fs::path& gaussians_file, const RunConfig& cfg,
                                 const fs::path& out_dir, bool overwrite)
{
    const auto start = std::chrono::steady_clock::now();
    const FrameDataset data = load_dataset(dataset_dir);
    const GaussianCloud cloud = load_gaussians(gaussians_file);
    prepare_out_dir(out_dir, overwrite);
    save_json(config_to_json(cfg), out_dir / "config.json");

    HexPlaneField field(cfg.hexplane, compute_bounds(cloud, cfg.bounds_margin), cfg.field_seed);
    TrainConfig tc = cfg.train;
    tc.snapshot_dir = out_dir;
    if (tc.checkpoint_every > 0) tc.checkpoint_dir = out_dir / "checkpoints";
    MotionOptimizer opt(cloud, field, data, tc);
    opt.reconstruct_motion();
    if (cfg.sds_enabled && tc.sds_iters > 0) {
        ToyDenoiser den = make_denoiser(cfg);
        DenoiserPredictor predictor(den);
        opt.refine_with_sds(&predictor);
    }

    AnimateResult res;
    res.trace = opt.trace();
    res.trajectory.times = data.times;
    res.trajectory.positions = extract_positions(cloud, field, data.times);
    std::vector<std::vector<Image>> rgb, mask;
    render_all(cloud, field, data.views, data.times, rgb, mask);
    res.report = evaluate_images(rgb, mask, data);
    if (fs::exists(dataset_dir / "truth.json")) {
        const Trajectory truth = trajectory_from_json(load_json(dataset_dir / "truth.json"));
        res.report.trajectory_rmse = trajectory_rmse(res.trajectory.positions, truth.positions);
        res.report.extent = cloud_extent(cloud.positions);
    }
    res.report.wall_clock_seconds = seconds_since(start);

    save_field(field, out_dir / "field.a4df");
    write_loss_csv(res.trace, out_dir / "loss.csv");
    save_json(trajectory_to_json(res.trajectory), out_dir / "trajectory.json");
    save_json(to_json(res.report), out_dir / "report.json");
    return res;
}

// ---------------------------------------------------------------------------
// render

/// Writes frames/ and masks/ PNGs in the dataset layout for every camera and time.
inline std::size_t run_render(const fs::path& checkpoint, const fs::path& gaussians_file, const fs::path& cameras_file,
                              const std::vector<double>& times, const fs::path& out_dir, bool overwrite)
{
    const HexPlaneField field = load_field(checkpoint);
    const GaussianCloud cloud = load_gaussians(gaussians_file);
    const auto cams = load_cameras(cameras_file);
    if (cams.empty()) throw ValidationError("camera file has no cameras");
    for (std::size_t v = 1; v < cams.size(); ++v)
        if (cams[v].width != cams[0].width || cams[v].height != cams[0].height)
            throw ValidationError("camera " + std::to_string(v) + " resolution differs from camera 0");
    for (double t : times)
        if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("render times must lie in [0, 1]");
    prepare_out_dir(out_dir, overwrite);
    std::vector<std::vector<Image>> rgb, mask;
    render_all(cloud, field, cams, times, rgb, mask);
    fs::create_directories(out_dir / "frames");
    fs::create_directories(out_dir / "masks");
    std::size_t written = 0;
    for (std::size_t v = 0; v < cams.size(); ++v)
        for (std::size_t i = 0; i < times.size(); ++i) {
            write_png(out_dir / "frames" / frame_name(v, i), rgb[v][i]);
            write_png(out_dir / "masks" / frame_name(v, i), mask[v][i]);
            ++written;
        }
    save_json(times, out_dir / "times.json");
    save_cameras(cams, out_dir / "cameras.json");
    return written;
}

// ---------------------------------------------------------------------------
// animate-mesh

struct MeshAnimateResult {
    std::vector<LossRecord> trace;
    VertexTrajectory trajectory;
    EvalReport report;
};

/// Reconstruction-only pipeline on a mesh: Gaussians from vertices, trained field, deformed
/// vertices exported as an OBJ sequence with a manifest.
inline MeshAnimateResult run_animate_mesh(const fs::path& mesh_file, const fs::path& dataset_dir,
                                          const fs::path& config_file, const fs::path& out_dir, bool overwrite)
{
    const auto start = std::chrono::steady_clock::now();
    const json raw = config_file.empty() ? json::object() : load_json(config_file);
    reject_sds_keys(raw);
    const RunConfig cfg = parse_config(raw);
    const TriMesh mesh = load_obj(mesh_file);
    const FrameDataset data = load_dataset(dataset_dir);
    const GaussianCloud cloud = mesh_to_gaussians(mesh);
    prepare_out_dir(out_dir, overwrite);

    HexPlaneField field(cfg.hexplane, compute_bounds(cloud, cfg.bounds_margin), cfg.field_seed);
    TrainConfig tc = cfg.train;
    tc.snapshot_dir = out_dir;
    MotionOptimizer opt(cloud, field, data, tc);
    opt.reconstruct_motion();

    MeshAnimateResult res;
    res.trace = opt.trace();
    res.trajectory = extract_trajectory(cloud, field, data.times);
    export_mesh_sequence(deform_mesh(mesh, res.trajectory), data.times, cfg.fps, out_dir / "meshes");
    std::vector<std::vector<Image>> rgb, mask;
    render_all(cloud, field, data.views, data.times, rgb, mask);
    res.report = evaluate_images(rgb, mask, data);
    if (fs::exists(dataset_dir / "truth.json")) {
        const Trajectory truth = trajectory_from_json(load_json(dataset_dir / "truth.json"));
        res.report.trajectory_rmse = trajectory_rmse(res.trajectory, truth.positions);
        res.report.extent = cloud_extent(cloud.positions);
    }
    res.report.wall_clock_seconds = seconds_since(start);
    save_field(field, out_dir / "field.a4df");
    write_loss_csv(res.trace, out_dir / "loss.csv");
    save_json(to_json(res.report), out_dir / "report.json");
    return res;
}

// ---------------------------------------------------------------------------
// evaluate

inline EvalReport run_evaluate(const fs::path& renders_dir, const fs::path& dataset_dir,
                               const std::optional<fs::path>& truth_file, const std::optional<fs::path>& trajectory_file)
{
    const auto start = std::chrono::steady_clock::now();
    const FrameDataset data = load_dataset(dataset_dir);
    EvalReport r = evaluate_dirs(renders_dir, data);
    if (truth_file.has_value() != trajectory_file.has_value())
        throw ValidationError("trajectory RMSE needs both --truth and --trajectory");
    if (truth_file) {
        const Trajectory truth = trajectory_from_json(load_json(*truth_file));
        const Trajectory pred = trajectory_from_json(load_json(*trajectory_file));
        r.trajectory_rmse = trajectory_rmse(pred.positions, truth.positions);
        r.extent = cloud_extent(truth.positions.front());
    }
    r.wall_clock_seconds = seconds_since(start);
    return r;
}

// ---------------------------------------------------------------------------
// train-denoiser

struct DenoiserTrainOptions {
    int steps = 500;
    int batch = 4;
    int views = 2;
    int frames = 4;
    int image_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

/// Trains on moving-blob clips, or on the latent of a dataset when one is given.
inline std::vector<double> run_train_denoiser(ToyDenoiser& model, const DenoiserTrainOptions& o,
                                              const FrameDataset* dataset = nullptr, int dataset_resolution = 16)
{
    detail::require(o.steps >= 1 && o.batch >= 1, "training needs positive steps and batch");
    std::mt19937_64 rng(o.seed);
    const NoiseSchedule schedule = NoiseSchedule::linear();
    DenoiserTrainer trainer;
    trainer.learning_rate = o.learning_rate;
    std::optional<LatentVideo> fixed;
    if (dataset) fixed = encode_dataset(*dataset, dataset_resolution);
    std::vector<double> losses;
    for (int s = 0; s < o.steps; ++s) {
        if (fixed) {
            losses.push_back(train_step(model, trainer, *fixed, schedule, rng, dataset->views));
        } else {
            const LatentVideo batch = moving_blob_batch(o.batch, o.views, o.frames, o.image_size, rng);
            losses.push_back(train_step(model, trainer, batch, schedule, rng));
        }
    }
    return losses;
}

} // namespace animate4d
