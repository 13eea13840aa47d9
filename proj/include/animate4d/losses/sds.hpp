#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/types.hpp"
#include "animate4d/mvvdm/latent.hpp"

#include <random>
#include <span>
#include <vector>

namespace animate4d {

/// Everything a noise predictor may condition on. `sampled_noise` is the noise that was
/// mixed into `noisy`; learned predictors ignore it, oracle predictors in tests use it.
struct NoiseQuery {
    const LatentVideo& clean_first;   ///< frame 0 of the latent, f = 1
    const LatentVideo& noisy;         ///< noised frames 1.., f - 1 frames
    int timestep;
    std::span<const Camera> cameras;  ///< one per view
    const LatentVideo& sampled_noise;
};

/// Epsilon-prediction model consumed by sds_loss. Output shape must equal query.noisy.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual LatentVideo predict(const NoiseQuery& query) = 0;
};

struct SdsResult {
    double loss = 0.0;
    LatentVideo grad;         ///< d loss / d z, zero on frame 0
    LatentVideo z0_estimate;  ///< reconstructed clean latent for frames 1..
};

/// z0-reconstruction score distillation on frames 1.. of z (frame 0 is the clean condition):
///   z_t = a z + s eps,  z0_hat = (z_t - s eps_theta) / a,  loss = |z - z0_hat|^2.
/// z0_hat is treated as a constant, so d loss / d z = 2 (z - z0_hat).
inline SdsResult sds_loss(const LatentVideo& z, NoisePredictor& predictor, int t, const NoiseSchedule& schedule,
                          const LatentVideo& noise, std::span<const Camera> cameras = {})
{
    const NoisedLatent noised = forward_noise(z, t, schedule, noise);
    const LatentVideo clean_first = z.frame_slice(0, 1);
    const LatentVideo noisy_tail = noised.noisy.frame_slice(1, z.frames() - 1);
    const LatentVideo predicted = predictor.predict({clean_first, noisy_tail, t, cameras, noise});
    if (!predicted.same_shape(noise)) throw ValidationError("sds_loss: denoiser output shape mismatch");

    const double ratio = schedule.noise(t) / schedule.signal(t);
    const LatentVideo tail = z.frame_slice(1, z.frames() - 1);
    SdsResult out;
    out.z0_estimate = tail;
    LatentVideo grad_tail = tail;
    for (std::size_t i = 0; i < tail.size(); ++i) {
        // (z_t - s eps_theta) / a expanded with z_t = a z + s eps; exact when eps_theta == eps.
        const double residual = ratio * (predicted.data()[i] - noise.data()[i]);
        out.z0_estimate.data()[i] = tail.data()[i] - residual;
        out.loss += residual * residual;
        grad_tail.data()[i] = 2.0 * residual;
    }
    out.grad = LatentVideo(z.batch(), z.views(), z.frames(), z.height(), z.width(), z.channels());
    out.grad.set_frames(1, grad_tail);
    return out;
}

template <typename Rng>
SdsResult sds_loss(const LatentVideo& z, NoisePredictor& predictor, int t, const NoiseSchedule& schedule, Rng& rng,
                   std::span<const Camera> cameras = {})
{
    detail::require(z.frames() >= 2, "sds_loss needs at least two frames");
    const LatentVideo noise = LatentVideo::gaussian_like(z.frame_slice(1, z.frames() - 1), rng);
    return sds_loss(z, predictor, t, schedule, noise, cameras);
}

/// Uniform integer timestep in [t_min, t_max] expressed as fractions of the schedule length.
template <typename Rng>
int sample_sds_timestep(const NoiseSchedule& schedule, double t_min, double t_max, Rng& rng)
{
    detail::require(0.0 <= t_min && t_min <= t_max && t_max <= 1.0, "SDS timestep range must satisfy 0<=min<=max<=1");
    const int lo = static_cast<int>(std::floor(t_min * (schedule.steps() - 1)));
    const int hi = static_cast<int>(std::floor(t_max * (schedule.steps() - 1)));
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

struct LossWeights {
    double rec = 100.0;
    double sds = 0.01;
    double arap = 10.0;
};

inline void validate(const LossWeights& w)
{
    detail::require(w.rec >= 0.0 && w.sds >= 0.0 && w.arap >= 0.0, "loss weights must be non-negative");
}

/// Weighted sum of the three objectives.
inline double total_loss(double rec, double sds, double arap, const LossWeights& w)
{
    if (!std::isfinite(rec) || !std::isfinite(sds) || !std::isfinite(arap))
        throw NumericError("total_loss: non-finite loss component");
    validate(w);
    return w.rec * rec + w.sds * sds + w.arap * arap;
}

} // namespace animate4d
