#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/types.hpp"
#include "animate4d/render/splat.hpp"

#include <vector>

namespace animate4d {

struct ReconTerm {
    double loss = 0.0;
    Image grad_rgb;
    Image grad_mask;
};

/// Summed squared error of color and mask for one (view, frame) pair, with its gradient.
inline ReconTerm recon_loss(const Image& rgb, const Image& mask, const Image& target_rgb, const Image& target_mask)
{
    if (!rgb.same_shape(target_rgb) || !mask.same_shape(target_mask) || rgb.channels != 3 || mask.channels != 1 ||
        rgb.width != mask.width || rgb.height != mask.height)
        throw ValidationError("recon_loss: rendered and target shapes differ");
    ReconTerm out{0.0, Image(rgb.width, rgb.height, 3), Image(mask.width, mask.height, 1)};
    for (std::size_t i = 0; i < rgb.data.size(); ++i) {
        const double d = rgb.data[i] - target_rgb.data[i];
        out.loss += d * d;
        out.grad_rgb.data[i] = 2.0 * d;
    }
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        const double d = mask.data[i] - target_mask.data[i];
        out.loss += d * d;
        out.grad_mask.data[i] = 2.0 * d;
    }
    return out;
}

/// Sum over every rendered (view, frame) pair; rendered is indexed [view][frame] like the dataset.
inline double recon_loss(const std::vector<std::vector<RenderOutput>>& rendered, const FrameDataset& target,
                         std::vector<std::vector<ReconTerm>>* grads = nullptr)
{
    if (rendered.size() != target.num_views()) throw ValidationError("recon_loss: view count mismatch");
    double total = 0.0;
    if (grads) grads->assign(rendered.size(), {});
    for (std::size_t v = 0; v < rendered.size(); ++v) {
        if (rendered[v].size() != target.num_frames()) throw ValidationError("recon_loss: frame count mismatch");
        for (std::size_t f = 0; f < rendered[v].size(); ++f) {
            auto term = recon_loss(rendered[v][f].rgb, rendered[v][f].mask, target.frames[v][f], target.masks[v][f]);
            total += term.loss;
            if (grads) (*grads)[v].push_back(std::move(term));
        }
    }
    return total;
}

} // namespace animate4d
