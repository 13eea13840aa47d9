#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/types.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

namespace animate4d {

/// Dense tensor indexed (batch, view, frame, height, width, channel), row-major.
/// Frame 0 is the clean conditioning slice.
class LatentVideo {
public:
    LatentVideo() = default;
    LatentVideo(int batch, int views, int frames, int height, int width, int channels, double fill = 0.0)
        : dims_{batch, views, frames, height, width, channels}
    {
        for (int d : dims_) detail::require(d >= 1, "latent dimensions must be positive");
        data_.assign(static_cast<std::size_t>(batch) * views * frames * height * width * channels, fill);
    }

    [[nodiscard]] int batch() const { return dims_[0]; }
    [[nodiscard]] int views() const { return dims_[1]; }
    [[nodiscard]] int frames() const { return dims_[2]; }
    [[nodiscard]] int height() const { return dims_[3]; }
    [[nodiscard]] int width() const { return dims_[4]; }
    [[nodiscard]] int channels() const { return dims_[5]; }
    [[nodiscard]] const std::array<int, 6>& dims() const { return dims_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }

    [[nodiscard]] std::vector<double>& data() { return data_; }
    [[nodiscard]] const std::vector<double>& data() const { return data_; }

    [[nodiscard]] std::size_t offset(int b, int v, int f, int y, int x, int c) const
    {
        return ((((static_cast<std::size_t>(b) * dims_[1] + v) * dims_[2] + f) * dims_[3] + y) * dims_[4] + x) *
                   dims_[5] +
               c;
    }
    [[nodiscard]] double& at(int b, int v, int f, int y, int x, int c) { return data_[offset(b, v, f, y, x, c)]; }
    [[nodiscard]] double at(int b, int v, int f, int y, int x, int c) const { return data_[offset(b, v, f, y, x, c)]; }

    [[nodiscard]] bool same_shape(const LatentVideo& o) const { return dims_ == o.dims_; }

    /// Frames [first, first + count) as a new tensor.
    [[nodiscard]] LatentVideo frame_slice(int first, int count) const
    {
        detail::require(first >= 0 && count >= 1 && first + count <= frames(), "frame slice out of range");
        LatentVideo out(batch(), views(), count, height(), width(), channels());
        const std::size_t block = static_cast<std::size_t>(height()) * width() * channels();
        for (int b = 0; b < batch(); ++b)
            for (int v = 0; v < views(); ++v)
                for (int f = 0; f < count; ++f)
                    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(offset(b, v, first + f, 0, 0, 0)), block,
                                out.data_.begin() + static_cast<std::ptrdiff_t>(out.offset(b, v, f, 0, 0, 0)));
        return out;
    }

    /// Writes `src` into frames [first, first + src.frames()).
    void set_frames(int first, const LatentVideo& src)
    {
        detail::require(src.batch() == batch() && src.views() == views() && src.height() == height() &&
                            src.width() == width() && src.channels() == channels() &&
                            first + src.frames() <= frames(),
                        "set_frames shape mismatch");
        const std::size_t block = static_cast<std::size_t>(height()) * width() * channels();
        for (int b = 0; b < batch(); ++b)
            for (int v = 0; v < views(); ++v)
                for (int f = 0; f < src.frames(); ++f)
                    std::copy_n(src.data_.begin() + static_cast<std::ptrdiff_t>(src.offset(b, v, f, 0, 0, 0)), block,
                                data_.begin() + static_cast<std::ptrdiff_t>(offset(b, v, first + f, 0, 0, 0)));
    }

    /// Same data with views reordered: out view k = this view perm[k].
    [[nodiscard]] LatentVideo permute_views(const std::vector<int>& perm) const
    {
        detail::require(static_cast<int>(perm.size()) == views(), "view permutation has wrong length");
        LatentVideo out(batch(), views(), frames(), height(), width(), channels());
        const std::size_t block = static_cast<std::size_t>(frames()) * height() * width() * channels();
        for (int b = 0; b < batch(); ++b)
            for (int v = 0; v < views(); ++v)
                std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(offset(b, perm[v], 0, 0, 0, 0)), block,
                            out.data_.begin() + static_cast<std::ptrdiff_t>(out.offset(b, v, 0, 0, 0, 0)));
        return out;
    }

    [[nodiscard]] bool all_finite() const
    {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    template <typename Rng>
    static LatentVideo gaussian_like(const LatentVideo& shape, Rng& rng)
    {
        LatentVideo out(shape.batch(), shape.views(), shape.frames(), shape.height(), shape.width(), shape.channels());
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto& v : out.data_) v = normal(rng);
        return out;
    }

private:
    std::array<int, 6> dims_{1, 1, 1, 1, 1, 1};
    std::vector<double> data_ = std::vector<double>(1, 0.0);
};

// ---------------------------------------------------------------------------
// Toy latent codec: fixed 2x2 patchify. Latent channel index = (dy * 2 + dx) * C + c.

inline constexpr int kPatch = 2;

/// Images indexed [view][frame] -> LatentVideo with batch 1, half the spatial size and 4x channels.
inline LatentVideo encode_latent(const std::vector<std::vector<Image>>& images)
{
    detail::require(!images.empty() && !images[0].empty(), "encode_latent needs at least one image");
    const Image& ref = images[0][0];
    if (ref.width % kPatch != 0 || ref.height % kPatch != 0)
        throw ValidationError("encode_latent: image size " + std::to_string(ref.width) + "x" +
                              std::to_string(ref.height) + " is not divisible by 2");
    const int views = static_cast<int>(images.size()), frames = static_cast<int>(images[0].size());
    const int c = ref.channels;
    LatentVideo z(1, views, frames, ref.height / kPatch, ref.width / kPatch, c * kPatch * kPatch);
    for (int v = 0; v < views; ++v) {
        detail::require(static_cast<int>(images[v].size()) == frames, "encode_latent: ragged frame counts");
        for (int f = 0; f < frames; ++f) {
            const Image& img = images[v][f];
            detail::require(img.same_shape(ref), "encode_latent: images differ in shape");
            for (int y = 0; y < z.height(); ++y)
                for (int x = 0; x < z.width(); ++x)
                    for (int dy = 0; dy < kPatch; ++dy)
                        for (int dx = 0; dx < kPatch; ++dx)
                            for (int ch = 0; ch < c; ++ch)
                                z.at(0, v, f, y, x, (dy * kPatch + dx) * c + ch) =
                                    img.at(x * kPatch + dx, y * kPatch + dy, ch);
        }
    }
    return z;
}

/// Inverse of encode_latent for batch 0.
inline std::vector<std::vector<Image>> decode_latent(const LatentVideo& z)
{
    if (z.channels() % (kPatch * kPatch) != 0)
        throw ValidationError("decode_latent: channel count is not a multiple of 4");
    const int c = z.channels() / (kPatch * kPatch);
    std::vector<std::vector<Image>> images(z.views());
    for (int v = 0; v < z.views(); ++v)
        for (int f = 0; f < z.frames(); ++f) {
            Image img(z.width() * kPatch, z.height() * kPatch, c);
            for (int y = 0; y < z.height(); ++y)
                for (int x = 0; x < z.width(); ++x)
                    for (int dy = 0; dy < kPatch; ++dy)
                        for (int dx = 0; dx < kPatch; ++dx)
                            for (int ch = 0; ch < c; ++ch)
                                img.at(x * kPatch + dx, y * kPatch + dy, ch) =
                                    z.at(0, v, f, y, x, (dy * kPatch + dx) * c + ch);
            images[v].push_back(std::move(img));
        }
    return images;
}

// ---------------------------------------------------------------------------
// Noise schedule

/// Cumulative signal fractions abar_t over discrete steps, strictly decreasing in (0, 1].
/// Signal scale alpha_t = sqrt(abar_t), noise scale sigma_t = sqrt(1 - abar_t).
class NoiseSchedule {
public:
    /// Linear beta schedule, beta from beta_start to beta_end over `steps`.
    static NoiseSchedule linear(int steps = 1000, double beta_start = 8.5e-4, double beta_end = 1.2e-2)
    {
        detail::require(steps >= 2, "noise schedule needs at least two steps");
        std::vector<double> abar(steps);
        double acc = 1.0;
        for (int t = 0; t < steps; ++t) {
            const double beta = beta_start + (beta_end - beta_start) * t / (steps - 1);
            acc *= 1.0 - beta;
            abar[t] = acc;
        }
        return NoiseSchedule(std::move(abar));
    }

    explicit NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar))
    {
        detail::require(!alpha_bar_.empty(), "noise schedule is empty");
        for (std::size_t t = 0; t < alpha_bar_.size(); ++t) {
            detail::require(alpha_bar_[t] > 0.0 && alpha_bar_[t] <= 1.0, "alpha_bar must lie in (0, 1]");
            if (t > 0) detail::require(alpha_bar_[t] < alpha_bar_[t - 1], "alpha_bar must be strictly decreasing");
        }
    }

    [[nodiscard]] int steps() const { return static_cast<int>(alpha_bar_.size()); }
    [[nodiscard]] double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
    [[nodiscard]] double signal(int t) const { return std::sqrt(alpha_bar(t)); }
    [[nodiscard]] double noise(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }

private:
    std::vector<double> alpha_bar_;
};

struct NoisedLatent {
    LatentVideo noisy;  ///< frame 0 bitwise equal to the input, frames 1.. noised
    LatentVideo noise;  ///< the sampled noise for frames 1.. (f - 1 frames)
};

/// Noises frames 1..f-1 with the given noise; frame 0 stays clean.
inline NoisedLatent forward_noise(const LatentVideo& z0, int t, const NoiseSchedule& schedule, LatentVideo noise)
{
    detail::require(t >= 0 && t < schedule.steps(), "timestep out of schedule range");
    detail::require(z0.frames() >= 2, "forward_noise needs a clean frame and at least one noisy frame");
    const LatentVideo tail = z0.frame_slice(1, z0.frames() - 1);
    detail::require(noise.same_shape(tail), "forward_noise: noise shape mismatch");
    const double a = schedule.signal(t), s = schedule.noise(t);
    LatentVideo noisy_tail = tail;
    for (std::size_t i = 0; i < tail.size(); ++i) noisy_tail.data()[i] = a * tail.data()[i] + s * noise.data()[i];
    NoisedLatent out{z0, std::move(noise)};
    out.noisy.set_frames(1, noisy_tail);
    return out;
}

template <typename Rng>
NoisedLatent forward_noise(const LatentVideo& z0, int t, const NoiseSchedule& schedule, Rng& rng)
{
    detail::require(z0.frames() >= 2, "forward_noise needs a clean frame and at least one noisy frame");
    LatentVideo noise = LatentVideo::gaussian_like(z0.frame_slice(1, z0.frames() - 1), rng);
    return forward_noise(z0, t, schedule, std::move(noise));
}

} // namespace animate4d
