#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/types.hpp"
#include "animate4d/mvvdm/latent.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace animate4d {

/// Box-filter downsampling by an integer factor.
inline Image downsample(const Image& img, int factor)
{
    detail::require(factor >= 1 && img.width % factor == 0 && img.height % factor == 0,
                    "downsample factor must divide the image size");
    Image out(img.width / factor, img.height / factor, img.channels);
    const double inv = 1.0 / (factor * factor);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double s = 0.0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx) s += img.at(x * factor + dx, y * factor + dy, c);
                out.at(x, y, c) = s * inv;
            }
    return out;
}

/// One clip of a colored Gaussian blob moving on a straight line, seen from `views`
/// cameras that shift it horizontally by a per-view parallax. Images are size x size RGB.
template <typename Rng>
std::vector<std::vector<Image>> moving_blob_clip(int views, int frames, int size, Rng& rng)
{
    detail::require(views >= 1 && frames >= 1 && size >= 2, "moving blob clip needs positive sizes");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double s = size;
    const double x0 = s * (0.25 + 0.5 * u(rng)), y0 = s * (0.25 + 0.5 * u(rng));
    const double vx = s * (u(rng) - 0.5) * 0.15, vy = s * (u(rng) - 0.5) * 0.15;
    const double sigma = s * (0.08 + 0.06 * u(rng));
    const double parallax = s * 0.08;
    const Vec3 color(0.3 + 0.7 * u(rng), 0.3 + 0.7 * u(rng), 0.3 + 0.7 * u(rng));
    std::vector<std::vector<Image>> clip(views);
    for (int v = 0; v < views; ++v)
        for (int f = 0; f < frames; ++f) {
            Image img(size, size, 3);
            const double cx = x0 + vx * f + parallax * (v - 0.5 * (views - 1)), cy = y0 + vy * f;
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double g = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * sigma * sigma));
                    for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c] * g;
                }
            clip[v].push_back(std::move(img));
        }
    return clip;
}

/// Stacks `count` encoded clips into a batch; latent spatial size is size / 2.
template <typename Rng>
LatentVideo moving_blob_batch(int count, int views, int frames, int size, Rng& rng)
{
    detail::require(count >= 1, "batch needs at least one clip");
    LatentVideo out;
    for (int b = 0; b < count; ++b) {
        const LatentVideo z = encode_latent(moving_blob_clip(views, frames, size, rng));
        if (b == 0) out = LatentVideo(count, z.views(), z.frames(), z.height(), z.width(), z.channels());
        std::copy(z.data().begin(), z.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * z.size()));
    }
    return out;
}

/// Encodes a dataset's frames (optionally downsampled) as one latent clip.
inline LatentVideo encode_dataset(const FrameDataset& data, int resolution)
{
    std::vector<std::vector<Image>> images(data.num_views());
    for (std::size_t v = 0; v < data.num_views(); ++v)
        for (const auto& img : data.frames[v]) {
            detail::require(img.width == img.height && img.width % resolution == 0,
                            "dataset resolution must be a multiple of the latent render resolution");
            images[v].push_back(downsample(img, img.width / resolution));
        }
    return encode_latent(images);
}

} // namespace animate4d
