#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/io.hpp"
#include "animate4d/harness/synth.hpp"
#include "animate4d/hexplane/field.hpp"
#include "animate4d/mvvdm/denoiser.hpp"
#include "animate4d/optim/motion.hpp"

#include <set>
#include <string>

namespace animate4d {

inline constexpr int kConfigVersion = 1;

/// Everything a run needs. Defaults are the paper's recipe at desk scale.
struct RunConfig {
    TrainConfig train;
    HexPlaneConfig hexplane;
    double bounds_margin = kDefaultBoundsMargin;
    std::uint64_t field_seed = 0;
    bool sds_enabled = true;
    fs::path denoiser;          ///< checkpoint; empty means a seeded untrained denoiser
    DenoiserConfig denoiser_config;
    std::uint64_t denoiser_seed = 0;
    SyntheticMotionSpec synth;
    double fps = 8.0;
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where)
{
    if (!obj.is_object()) throw ValidationError("config section '" + where + "' must be an object");
    for (const auto& [k, _] : obj.items())
        if (!known.contains(k)) throw ValidationError("unknown config key '" + where + "." + k + "'");
}

template <typename T>
void read_key(const json& obj, const char* key, T& out, const std::string& where)
{
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("config key '" + where + "." + key + "' has the wrong type");
    }
}

inline Vec3 read_vec3(const json& j, const std::string& where)
{
    if (!j.is_array() || j.size() != 3) throw ValidationError("config key '" + where + "' must be a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

} // namespace detail

/// Overlays a JSON document onto the defaults. Unknown keys are errors.
inline RunConfig parse_config(const json& j)
{
    RunConfig c;
    detail::reject_unknown(j, {"version", "train", "loss", "sds", "hexplane", "denoiser", "synth", "mesh"}, "");
    if (j.contains("version") && j.at("version") != kConfigVersion)
        throw ValidationError("unsupported config version " + j.at("version").dump() + " (expected " +
                              std::to_string(kConfigVersion) + ")");
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown(t,
                               {"recon_iters", "sds_iters", "lr_planes", "lr_heads", "views_per_step", "frames_per_step",
                                "progressive_warmup_iters", "sds_resolution", "neighbor_radius", "seed",
                                "checkpoint_every"},
                               "train");
        auto& tr = c.train;
        detail::read_key(t, "recon_iters", tr.recon_iters, "train");
        detail::read_key(t, "sds_iters", tr.sds_iters, "train");
        detail::read_key(t, "lr_planes", tr.lr_planes, "train");
        detail::read_key(t, "lr_heads", tr.lr_heads, "train");
        detail::read_key(t, "views_per_step", tr.views_per_step, "train");
        detail::read_key(t, "frames_per_step", tr.frames_per_step, "train");
        detail::read_key(t, "progressive_warmup_iters", tr.progressive_warmup_iters, "train");
        detail::read_key(t, "sds_resolution", tr.sds_resolution, "train");
        detail::read_key(t, "neighbor_radius", tr.neighbor_radius, "train");
        detail::read_key(t, "seed", tr.seed, "train");
        detail::read_key(t, "checkpoint_every", tr.checkpoint_every, "train");
    }
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        detail::reject_unknown(l, {"rec", "sds", "arap"}, "loss");
        detail::read_key(l, "rec", c.train.weights.rec, "loss");
        detail::read_key(l, "sds", c.train.weights.sds, "loss");
        detail::read_key(l, "arap", c.train.weights.arap, "loss");
    }
    if (j.contains("sds")) {
        const auto& s = j.at("sds");
        detail::reject_unknown(s, {"enabled", "t_min", "t_max", "denoiser"}, "sds");
        detail::read_key(s, "enabled", c.sds_enabled, "sds");
        detail::read_key(s, "t_min", c.train.sds_t_min, "sds");
        detail::read_key(s, "t_max", c.train.sds_t_max, "sds");
        if (s.contains("denoiser") && !s.at("denoiser").is_null()) {
            std::string p;
            detail::read_key(s, "denoiser", p, "sds");
            c.denoiser = p;
        }
    }
    if (j.contains("hexplane")) {
        const auto& h = j.at("hexplane");
        detail::reject_unknown(h,
                               {"spatial_res", "temporal_res", "feature_dim", "num_scales", "hidden_width",
                                "hidden_layers", "scale_floor", "bounds_margin", "seed"},
                               "hexplane");
        auto& hp = c.hexplane;
        detail::read_key(h, "spatial_res", hp.spatial_res, "hexplane");
        detail::read_key(h, "temporal_res", hp.temporal_res, "hexplane");
        detail::read_key(h, "feature_dim", hp.feature_dim, "hexplane");
        detail::read_key(h, "num_scales", hp.num_scales, "hexplane");
        detail::read_key(h, "hidden_width", hp.hidden_width, "hexplane");
        detail::read_key(h, "hidden_layers", hp.hidden_layers, "hexplane");
        detail::read_key(h, "scale_floor", hp.scale_floor, "hexplane");
        detail::read_key(h, "bounds_margin", c.bounds_margin, "hexplane");
        detail::read_key(h, "seed", c.field_seed, "hexplane");
    }
    if (j.contains("denoiser")) {
        const auto& d = j.at("denoiser");
        detail::reject_unknown(d, {"width", "layers", "mix_hidden", "camera_hidden", "seed"}, "denoiser");
        detail::read_key(d, "width", c.denoiser_config.width, "denoiser");
        detail::read_key(d, "layers", c.denoiser_config.layers, "denoiser");
        detail::read_key(d, "mix_hidden", c.denoiser_config.mix_hidden, "denoiser");
        detail::read_key(d, "camera_hidden", c.denoiser_config.camera_hidden, "denoiser");
        detail::read_key(d, "seed", c.denoiser_seed, "denoiser");
    }
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        detail::reject_unknown(s,
                               {"kind", "amplitude", "axis", "frames", "views", "resolution", "elevation_deg",
                                "radius", "fov_deg", "azimuth_start_deg", "azimuth_step_deg"},
                               "synth");
        auto& sp = c.synth;
        if (s.contains("kind")) {
            std::string k;
            detail::read_key(s, "kind", k, "synth");
            sp.kind = parse_motion_kind(k);
        }
        detail::read_key(s, "amplitude", sp.amplitude, "synth");
        if (s.contains("axis")) sp.axis = detail::read_vec3(s.at("axis"), "synth.axis");
        detail::read_key(s, "frames", sp.frames, "synth");
        detail::read_key(s, "views", sp.views, "synth");
        detail::read_key(s, "resolution", sp.orbit.resolution, "synth");
        detail::read_key(s, "elevation_deg", sp.orbit.elevation_deg, "synth");
        detail::read_key(s, "radius", sp.orbit.radius, "synth");
        detail::read_key(s, "fov_deg", sp.orbit.fov_deg, "synth");
        detail::read_key(s, "azimuth_start_deg", sp.orbit.azimuth_start_deg, "synth");
        detail::read_key(s, "azimuth_step_deg", sp.orbit.azimuth_step_deg, "synth");
    }
    if (j.contains("mesh")) {
        const auto& m = j.at("mesh");
        detail::reject_unknown(m, {"fps"}, "mesh");
        detail::read_key(m, "fps", c.fps, "mesh");
    }
    validate(c.train);
    validate(c.hexplane);
    validate(c.denoiser_config);
    validate(c.synth);
    detail::require(c.bounds_margin >= 0.0, "hexplane.bounds_margin must be non-negative");
    detail::require(c.fps > 0.0, "mesh.fps must be positive");
    detail::require(0.0 <= c.train.sds_t_min && c.train.sds_t_min <= c.train.sds_t_max && c.train.sds_t_max <= 1.0,
                    "sds.t_min and sds.t_max must satisfy 0 <= t_min <= t_max <= 1");
    return c;
}

inline RunConfig load_config(const fs::path& path)
{
    if (path.empty()) return parse_config(json::object());
    return parse_config(load_json(path));
}

/// Mesh mode runs reconstruction only, so any SDS setting is a mistake worth reporting.
inline void reject_sds_keys(const json& j)
{
    auto has = [&](const char* section, const char* key) {
        return j.contains(section) && j.at(section).is_object() && j.at(section).contains(key);
    };
    if (j.contains("sds")) throw ValidationError("mesh mode does not use SDS; remove the 'sds' section from the config");
    for (const char* k : {"sds_iters", "sds_resolution"})
        if (has("train", k))
            throw ValidationError(std::string("mesh mode does not use SDS; remove 'train.") + k + "' from the config");
    if (has("loss", "sds")) throw ValidationError("mesh mode does not use SDS; remove 'loss.sds' from the config");
}

/// The effective configuration as JSON, for reproducibility records.
inline json config_to_json(const RunConfig& c)
{
    const auto& t = c.train;
    const auto& h = c.hexplane;
    const auto& s = c.synth;
    return {{"version", kConfigVersion},
            {"train",
             {{"recon_iters", t.recon_iters},
              {"sds_iters", t.sds_iters},
              {"lr_planes", t.lr_planes},
              {"lr_heads", t.lr_heads},
              {"views_per_step", t.views_per_step},
              {"frames_per_step", t.frames_per_step},
              {"progressive_warmup_iters", t.progressive_warmup_iters},
              {"sds_resolution", t.sds_resolution},
              {"neighbor_radius", t.neighbor_radius},
              {"seed", t.seed},
              {"checkpoint_every", t.checkpoint_every}}},
            {"loss", {{"rec", t.weights.rec}, {"sds", t.weights.sds}, {"arap", t.weights.arap}}},
            {"sds",
             {{"enabled", c.sds_enabled},
              {"t_min", t.sds_t_min},
              {"t_max", t.sds_t_max},
              {"denoiser", c.denoiser.empty() ? json(nullptr) : json(c.denoiser.string())}}},
            {"hexplane",
             {{"spatial_res", h.spatial_res},
              {"temporal_res", h.temporal_res},
              {"feature_dim", h.feature_dim},
              {"num_scales", h.num_scales},
              {"hidden_width", h.hidden_width},
              {"hidden_layers", h.hidden_layers},
              {"scale_floor", h.scale_floor},
              {"bounds_margin", c.bounds_margin},
              {"seed", c.field_seed}}},
            {"denoiser",
             {{"width", c.denoiser_config.width},
              {"layers", c.denoiser_config.layers},
              {"mix_hidden", c.denoiser_config.mix_hidden},
              {"camera_hidden", c.denoiser_config.camera_hidden},
              {"seed", c.denoiser_seed}}},
            {"synth",
             {{"kind", to_string(s.kind)},
              {"amplitude", s.amplitude},
              {"axis", {s.axis.x(), s.axis.y(), s.axis.z()}},
              {"frames", s.frames},
              {"views", s.views},
              {"resolution", s.orbit.resolution},
              {"elevation_deg", s.orbit.elevation_deg},
              {"radius", s.orbit.radius},
              {"fov_deg", s.orbit.fov_deg},
              {"azimuth_start_deg", s.orbit.azimuth_start_deg},
              {"azimuth_step_deg", s.orbit.azimuth_step_deg}}},
            {"mesh", {{"fps", c.fps}}}};
}

} // namespace animate4d
