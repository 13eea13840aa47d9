// animate4d command-line entry point.
//
//   animate4d synth        --out DIR [--gaussians F | --mesh F | --count N] [--config F]
//   animate4d animate      --dataset DIR --gaussians F [--config F] --out DIR
//   animate4d render       --checkpoint F --gaussians F --cameras F (--times F | --frames N) --out DIR
//   animate4d animate-mesh --mesh F --dataset DIR [--config F] --out DIR
//   animate4d evaluate     --renders DIR --dataset DIR [--truth F --trajectory F] [--out F]
//   animate4d train-denoiser --out F [--dataset DIR] [--steps N] [--config F]
//
// Exit codes: 0 success, 2 validation error, 1 runtime failure.

#include "animate4d/animate4d.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace a4 = animate4d;

namespace {

int threads_from_env()
{
    const char* env = std::getenv("ANIMATE4D_THREADS");
    if (!env || !*env) return 0;
    try {
        return std::stoi(env);
    } catch (const std::exception&) {
        throw a4::ValidationError(std::string("ANIMATE4D_THREADS must be an integer, got '") + env + "'");
    }
}

void print_report(const a4::EvalReport& r)
{
    std::cout << "mean PSNR " << (std::isinf(r.mean_psnr) ? std::string("inf") : std::to_string(r.mean_psnr))
              << " dB, mean IoU " << r.mean_iou;
    if (r.trajectory_rmse) {
        std::cout << ", trajectory RMSE " << *r.trajectory_rmse;
        if (r.extent) std::cout << " (" << 100.0 * *r.trajectory_rmse / *r.extent << "% of extent)";
    }
    std::cout << ", " << r.wall_clock_seconds << " s\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Animate static Gaussian clouds and meshes with Hex-plane motion fields"};
    app.require_subcommand(1);
    int threads = -1;
    app.add_option("--threads", threads, "worker threads (default: ANIMATE4D_THREADS or all cores)");

    std::string out, config, dataset, gaussians, mesh, checkpoint, cameras, times_file, renders, truth, trajectory;
    bool overwrite = false;
    std::size_t count = 200;
    std::uint64_t seed = 0;
    int frames = 0, steps = 500;

    auto* synth = app.add_subcommand("synth", "render a synthetic multi-view video with known motion");
    synth->add_option("--out", out, "dataset directory")->required();
    synth->add_option("--gaussians", gaussians, "static Gaussian file to animate");
    synth->add_option("--mesh", mesh, "OBJ mesh to animate (one Gaussian per vertex)");
    synth->add_option("--count", count, "size of the generated cloud when no input is given");
    synth->add_option("--seed", seed, "seed for the generated cloud");
    synth->add_option("--config", config, "JSON config; its 'synth' section describes the motion");
    synth->add_flag("--overwrite", overwrite, "replace a non-empty output directory");

    auto* animate = app.add_subcommand("animate", "fit a motion field to a multi-view video");
    animate->add_option("--dataset", dataset, "dataset directory")->required();
    animate->add_option("--gaussians", gaussians, "static Gaussian file")->required();
    animate->add_option("--config", config, "JSON config");
    animate->add_option("--out", out, "output directory")->required();
    animate->add_flag("--overwrite", overwrite, "replace a non-empty output directory");

    auto* render = app.add_subcommand("render", "render a trained field at given times");
    render->add_option("--checkpoint", checkpoint, "field checkpoint")->required();
    render->add_option("--gaussians", gaussians, "static Gaussian file")->required();
    render->add_option("--cameras", cameras, "camera JSON")->required();
    render->add_option("--times", times_file, "JSON array of times in [0,1]");
    render->add_option("--frames", frames, "number of evenly spaced times");
    render->add_option("--out", out, "output directory")->required();
    render->add_flag("--overwrite", overwrite, "replace a non-empty output directory");

    auto* amesh = app.add_subcommand("animate-mesh", "animate a mesh through per-vertex Gaussians");
    amesh->add_option("--mesh", mesh, "OBJ mesh")->required();
    amesh->add_option("--dataset", dataset, "dataset directory")->required();
    amesh->add_option("--config", config, "JSON config (SDS keys are rejected)");
    amesh->add_option("--out", out, "output directory")->required();
    amesh->add_flag("--overwrite", overwrite, "replace a non-empty output directory");

    auto* evaluate = app.add_subcommand("evaluate", "compare renders against a dataset");
    evaluate->add_option("--renders", renders, "render directory (dataset layout)")->required();
    evaluate->add_option("--dataset", dataset, "dataset directory")->required();
    evaluate->add_option("--truth", truth, "ground-truth trajectory JSON");
    evaluate->add_option("--trajectory", trajectory, "predicted trajectory JSON");
    evaluate->add_option("--out", out, "report JSON path (default: stdout only)");

    auto* tden = app.add_subcommand("train-denoiser", "train the toy multi-view video denoiser");
    tden->add_option("--out", out, "checkpoint path")->required();
    tden->add_option("--dataset", dataset, "train on this dataset's video instead of moving blobs");
    tden->add_option("--steps", steps, "optimizer steps");
    tden->add_option("--seed", seed, "sampling seed");
    tden->add_option("--config", config, "JSON config ('denoiser' and 'train.sds_resolution')");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        a4::set_thread_count(threads >= 0 ? threads : threads_from_env());

        if (*synth) {
            const a4::RunConfig cfg = a4::load_config(config);
            a4::SynthSource src;
            if (!gaussians.empty()) src.gaussians = gaussians;
            if (!mesh.empty()) src.mesh = mesh;
            src.generate = count;
            src.seed = seed;
            const auto scene = a4::run_synth(cfg.synth, src, out, overwrite);
            std::cout << "wrote " << scene.data.num_views() * scene.data.num_frames() << " image/mask pairs to " << out
                      << "\n";
        } else if (*animate) {
            const a4::RunConfig cfg = a4::load_config(config);
            const auto res = a4::run_animate(dataset, gaussians, cfg, out, overwrite);
            std::cout << res.trace.size() << " iterations, final loss " << res.trace.back().total << "\n";
            print_report(res.report);
        } else if (*render) {
            std::vector<double> times;
            if (!times_file.empty() == (frames > 0))
                throw a4::ValidationError("render needs exactly one of --times or --frames");
            if (!times_file.empty()) {
                try {
                    times = a4::load_json(times_file).get<std::vector<double>>();
                } catch (const a4::json::exception& e) {
                    throw a4::ValidationError("times file must be a JSON array of numbers: " + std::string(e.what()));
                }
            } else {
                times = frames == 1 ? std::vector<double>{0.0} : a4::uniform_times(static_cast<std::size_t>(frames));
            }
            const auto n = a4::run_render(checkpoint, gaussians, cameras, times, out, overwrite);
            std::cout << "wrote " << n << " renders to " << out << "\n";
        } else if (*amesh) {
            const auto res = a4::run_animate_mesh(mesh, dataset, config, out, overwrite);
            std::cout << res.trajectory.size() << " mesh frames written to " << (a4::fs::path(out) / "meshes") << "\n";
            print_report(res.report);
        } else if (*evaluate) {
            std::optional<a4::fs::path> t, p;
            if (!truth.empty()) t = truth;
            if (!trajectory.empty()) p = trajectory;
            const auto r = a4::run_evaluate(renders, dataset, t, p);
            if (!out.empty()) a4::save_json(a4::to_json(r), out);
            std::cout << a4::to_json(r).dump(2) << "\n";
        } else if (*tden) {
            const a4::RunConfig cfg = a4::load_config(config);
            a4::RunConfig fresh = cfg;
            fresh.denoiser.clear();
            a4::ToyDenoiser model = a4::make_denoiser(fresh);
            a4::DenoiserTrainOptions opts;
            opts.steps = steps;
            opts.seed = seed;
            std::vector<double> losses;
            if (!dataset.empty()) {
                const auto data = a4::load_dataset(dataset);
                losses = a4::run_train_denoiser(model, opts, &data, cfg.train.sds_resolution);
            } else {
                losses = a4::run_train_denoiser(model, opts);
            }
            a4::save_denoiser(model, out);
            std::cout << "trained " << losses.size() << " steps, last loss " << losses.back() << ", saved " << out
                      << "\n";
        }
        return 0;
    } catch (const a4::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 1;
    }
}
