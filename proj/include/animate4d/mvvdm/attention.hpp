#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/mvvdm/latent.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <vector>

namespace animate4d {

// Token matrices hold one token per row. Video tokens are ordered (batch, view, frame, y, x),
// matching LatentVideo with the channel axis as columns.

struct VideoLayout {
    int batch = 1;
    int views = 1;
    int frames = 1;
    int height = 1;
    int width = 1;

    [[nodiscard]] int tokens() const { return batch * views * frames * height * width; }
    [[nodiscard]] int row(int b, int v, int f, int y, int x) const
    {
        return (((b * views + v) * frames + f) * height + y) * width + x;
    }
    static VideoLayout of(const LatentVideo& z)
    {
        return {z.batch(), z.views(), z.frames(), z.height(), z.width()};
    }
};

inline Eigen::MatrixXd to_tokens(const LatentVideo& z)
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(z.size() / z.channels()), z.channels());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (int c = 0; c < z.channels(); ++c) m(r, c) = z.data()[static_cast<std::size_t>(r) * z.channels() + c];
    return m;
}

inline LatentVideo from_tokens(const Eigen::MatrixXd& m, const VideoLayout& l)
{
    LatentVideo z(l.batch, l.views, l.frames, l.height, l.width, static_cast<int>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) z.data()[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    return z;
}

/// Row indices of every spatial group (one per batch and frame; tokens ordered view, y, x).
inline std::vector<std::vector<int>> spatial_groups(const VideoLayout& l)
{
    std::vector<std::vector<int>> groups;
    for (int b = 0; b < l.batch; ++b)
        for (int f = 0; f < l.frames; ++f) {
            std::vector<int> g;
            for (int v = 0; v < l.views; ++v)
                for (int y = 0; y < l.height; ++y)
                    for (int x = 0; x < l.width; ++x) g.push_back(l.row(b, v, f, y, x));
            groups.push_back(std::move(g));
        }
    return groups;
}

/// Row indices of every temporal group (one per batch, view and pixel; tokens ordered by frame).
inline std::vector<std::vector<int>> temporal_groups(const VideoLayout& l)
{
    std::vector<std::vector<int>> groups;
    for (int b = 0; b < l.batch; ++b)
        for (int v = 0; v < l.views; ++v)
            for (int y = 0; y < l.height; ++y)
                for (int x = 0; x < l.width; ++x) {
                    std::vector<int> g;
                    for (int f = 0; f < l.frames; ++f) g.push_back(l.row(b, v, f, y, x));
                    groups.push_back(std::move(g));
                }
    return groups;
}

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

inline void scatter_add_rows(Eigen::MatrixXd& m, const std::vector<int>& rows, const Eigen::MatrixXd& src)
{
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(rows[i]) += src.row(static_cast<Eigen::Index>(i));
}

/// 2D sinusoidal encoding: the first half of the channels encodes y, the second half x.
inline Eigen::MatrixXd positional_encoding_2d(int height, int width, int channels)
{
    detail::require(channels % 4 == 0, "2D positional encoding needs a channel count divisible by 4");
    const int half = channels / 2;
    Eigen::MatrixXd pe(height * width, channels);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int k = 0; k < half / 2; ++k) {
                const double freq = std::pow(10000.0, -2.0 * k / half);
                const int r = y * width + x;
                pe(r, 2 * k) = std::sin(y * freq);
                pe(r, 2 * k + 1) = std::cos(y * freq);
                pe(r, half + 2 * k) = std::sin(x * freq);
                pe(r, half + 2 * k + 1) = std::cos(x * freq);
            }
    return pe;
}

// ---------------------------------------------------------------------------
// Single-head scaled dot-product attention with projections.

struct AttentionProj {
    Eigen::MatrixXd wq, wk, wv, wo;

    template <typename Rng>
    static AttentionProj random(int width, Rng& rng)
    {
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(width)));
        auto draw = [&] {
            Eigen::MatrixXd m(width, width);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
            return m;
        };
        AttentionProj p;
        p.wq = draw();
        p.wk = draw();
        p.wv = draw();
        p.wo = draw();
        return p;
    }
    static AttentionProj zeros(int width)
    {
        const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(width, width);
        return {z, z, z, z};
    }
    [[nodiscard]] int width() const { return static_cast<int>(wq.rows()); }
};

struct AttentionTape {
    Eigen::MatrixXd xq, xkv, q, k, v, p, o;
};

/// softmax((xq wq)(xkv wk)^T / sqrt(d)) (xkv wv) wo
inline Eigen::MatrixXd attend(const Eigen::MatrixXd& xq, const Eigen::MatrixXd& xkv, const Eigen::MatrixXd& wq,
                              const Eigen::MatrixXd& wk, const Eigen::MatrixXd& wv, const Eigen::MatrixXd& wo,
                              AttentionTape* tape = nullptr)
{
    if (xq.cols() != wq.rows() || xkv.cols() != wk.rows() || xkv.cols() != wv.rows())
        throw ValidationError("attention: token width does not match projection width");
    const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
    Eigen::MatrixXd q = xq * wq, k = xkv * wk, v = xkv * wv;
    Eigen::MatrixXd p = (q * k.transpose()) * scale;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double mx = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - mx).exp();
        p.row(r) /= p.row(r).sum();
    }
    Eigen::MatrixXd o = p * v;
    Eigen::MatrixXd y = o * wo;
    if (tape) *tape = {xq, xkv, std::move(q), std::move(k), std::move(v), std::move(p), std::move(o)};
    return y;
}

struct AttentionGrads {
    Eigen::MatrixXd xq, xkv, wq, wk, wv, wo;
};

inline AttentionGrads attend_backward(const AttentionTape& t, const Eigen::MatrixXd& wq, const Eigen::MatrixXd& wk,
                                      const Eigen::MatrixXd& wv, const Eigen::MatrixXd& wo, const Eigen::MatrixXd& gy)
{
    const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
    AttentionGrads g;
    g.wo = t.o.transpose() * gy;
    const Eigen::MatrixXd go = gy * wo.transpose();
    const Eigen::MatrixXd gp = go * t.v.transpose();
    const Eigen::MatrixXd gv = t.p.transpose() * go;
    Eigen::MatrixXd gs = t.p.array() * (gp.colwise() - (gp.array() * t.p.array()).rowwise().sum().matrix()).array();
    gs *= scale;
    const Eigen::MatrixXd gq = gs * t.k;
    const Eigen::MatrixXd gk = gs.transpose() * t.q;
    g.wq = t.xq.transpose() * gq;
    g.wk = t.xkv.transpose() * gk;
    g.wv = t.xkv.transpose() * gv;
    g.xq = gq * wq.transpose();
    g.xkv = gk * wk.transpose() + gv * wv.transpose();
    return g;
}

// ---------------------------------------------------------------------------
// Spatiotemporal block: spatial attention across all views of one frame (with 2D positional
// encoding) blended with temporal attention across frames at one (view, pixel):
//   out = mu * spatial + (1 - mu) * temporal,  mu = sigmoid(blend_logit).

struct SpatioTemporalBlock {
    AttentionProj spatial;
    AttentionProj temporal;
    Eigen::MatrixXd blend_logit = Eigen::MatrixXd::Zero(1, 1); ///< 1x1 so it can be visited like any tensor

    [[nodiscard]] double mu() const { return 1.0 / (1.0 + std::exp(-blend_logit(0, 0))); }
    [[nodiscard]] int width() const { return spatial.width(); }

    template <typename Rng>
    static SpatioTemporalBlock random(int width, Rng& rng)
    {
        return {AttentionProj::random(width, rng), AttentionProj::random(width, rng), Eigen::MatrixXd::Zero(1, 1)};
    }
};

struct SpatioTemporalTape {
    std::vector<AttentionTape> spatial, temporal;
    Eigen::MatrixXd spatial_out, temporal_out;
};

/// Token-level Eq.-1 blend. When `branches` is given it receives (spatial, temporal) outputs.
inline Eigen::MatrixXd spatiotemporal_tokens(const SpatioTemporalBlock& blk, const Eigen::MatrixXd& x,
                                             const VideoLayout& layout, SpatioTemporalTape* tape = nullptr)
{
    if (x.cols() != blk.width() || x.rows() != layout.tokens())
        throw ValidationError("spatiotemporal attention: input shape does not match block width or layout");
    const Eigen::MatrixXd pe = positional_encoding_2d(layout.height, layout.width, blk.width());
    const int hw = layout.height * layout.width;
    Eigen::MatrixXd spatial = Eigen::MatrixXd::Zero(x.rows(), x.cols());
    Eigen::MatrixXd temporal = Eigen::MatrixXd::Zero(x.rows(), x.cols());
    const auto sgroups = spatial_groups(layout);
    const auto tgroups = temporal_groups(layout);
    if (tape) {
        tape->spatial.resize(sgroups.size());
        tape->temporal.resize(tgroups.size());
    }
    for (std::size_t g = 0; g < sgroups.size(); ++g) {
        Eigen::MatrixXd xs = gather_rows(x, sgroups[g]);
        for (Eigen::Index r = 0; r < xs.rows(); ++r) xs.row(r) += pe.row(r % hw);
        const auto& w = blk.spatial;
        scatter_add_rows(spatial, sgroups[g], attend(xs, xs, w.wq, w.wk, w.wv, w.wo, tape ? &tape->spatial[g] : nullptr));
    }
    for (std::size_t g = 0; g < tgroups.size(); ++g) {
        const Eigen::MatrixXd xt = gather_rows(x, tgroups[g]);
        const auto& w = blk.temporal;
        scatter_add_rows(temporal, tgroups[g],
                         attend(xt, xt, w.wq, w.wk, w.wv, w.wo, tape ? &tape->temporal[g] : nullptr));
    }
    const double mu = blk.mu();
    Eigen::MatrixXd out = mu * spatial + (1.0 - mu) * temporal;
    if (tape) {
        tape->spatial_out = std::move(spatial);
        tape->temporal_out = std::move(temporal);
    }
    return out;
}

/// Adds parameter gradients into `grads` and returns d/d-x.
inline Eigen::MatrixXd spatiotemporal_tokens_backward(const SpatioTemporalBlock& blk, const SpatioTemporalTape& tape,
                                                      const VideoLayout& layout, const Eigen::MatrixXd& gy,
                                                      SpatioTemporalBlock& grads)
{
    const double mu = blk.mu();
    const double g_mu = (gy.array() * (tape.spatial_out - tape.temporal_out).array()).sum();
    grads.blend_logit(0, 0) += g_mu * mu * (1.0 - mu);
    Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(gy.rows(), gy.cols());
    const auto sgroups = spatial_groups(layout);
    const auto tgroups = temporal_groups(layout);
    auto accumulate = [](AttentionProj& dst, const AttentionGrads& g) {
        dst.wq += g.wq;
        dst.wk += g.wk;
        dst.wv += g.wv;
        dst.wo += g.wo;
    };
    for (std::size_t g = 0; g < sgroups.size(); ++g) {
        const auto& w = blk.spatial;
        const auto ag = attend_backward(tape.spatial[g], w.wq, w.wk, w.wv, w.wo, mu * gather_rows(gy, sgroups[g]));
        accumulate(grads.spatial, ag);
        scatter_add_rows(gx, sgroups[g], ag.xq + ag.xkv); // positional encoding is additive
    }
    for (std::size_t g = 0; g < tgroups.size(); ++g) {
        const auto& w = blk.temporal;
        const auto ag =
            attend_backward(tape.temporal[g], w.wq, w.wk, w.wv, w.wo, (1.0 - mu) * gather_rows(gy, tgroups[g]));
        accumulate(grads.temporal, ag);
        scatter_add_rows(gx, tgroups[g], ag.xq + ag.xkv);
    }
    return gx;
}

/// Eq.-1 spatiotemporal attention on a latent whose channel count equals the block width.
inline LatentVideo spatiotemporal_attention(const SpatioTemporalBlock& blk, const LatentVideo& x)
{
    if (x.channels() != blk.width())
        throw ValidationError("spatiotemporal attention: latent channels " + std::to_string(x.channels()) +
                              " differ from block width " + std::to_string(blk.width()));
    const VideoLayout layout = VideoLayout::of(x);
    return from_tokens(spatiotemporal_tokens(blk, to_tokens(x), layout), layout);
}

// ---------------------------------------------------------------------------
// MV2V adapter: frozen multi-view self-attention plus a cross-attention from noisy-frame
// queries to first-frame keys/values that reuses the frozen key/value projections.

struct MV2VAdapter {
    AttentionProj base;          ///< frozen
    Eigen::MatrixXd wq_prime;    ///< trainable
    Eigen::MatrixXd wo_prime;    ///< trainable, zero at init

    template <typename Rng>
    static MV2VAdapter random(int width, Rng& rng)
    {
        MV2VAdapter a;
        a.base = AttentionProj::random(width, rng);
        a.wq_prime = a.base.wq;
        a.wo_prime = Eigen::MatrixXd::Zero(width, width);
        return a;
    }
    [[nodiscard]] int width() const { return base.width(); }
};

struct AdapterTape {
    AttentionTape self, cross;
};

/// x_noisy and x_cond are the tokens of one frame with all views concatenated along rows.
inline Eigen::MatrixXd mv2v_adapter(const MV2VAdapter& a, const Eigen::MatrixXd& x_noisy, const Eigen::MatrixXd& x_cond,
                                    AdapterTape* tape = nullptr)
{
    if (x_noisy.rows() != x_cond.rows())
        throw ValidationError("mv2v_adapter: noisy and condition token counts differ (" +
                              std::to_string(x_noisy.rows()) + " vs " + std::to_string(x_cond.rows()) + ")");
    const auto& b = a.base;
    Eigen::MatrixXd out = attend(x_noisy, x_noisy, b.wq, b.wk, b.wv, b.wo, tape ? &tape->self : nullptr);
    out += attend(x_noisy, x_cond, a.wq_prime, b.wk, b.wv, a.wo_prime, tape ? &tape->cross : nullptr);
    return out;
}

struct AdapterInputGrads {
    Eigen::MatrixXd noisy, cond;
};

/// Adds parameter gradients into `grads` (base projections included; callers decide
/// whether to apply them) and returns input gradients.
inline AdapterInputGrads mv2v_adapter_backward(const MV2VAdapter& a, const AdapterTape& tape, const Eigen::MatrixXd& gy,
                                               MV2VAdapter& grads)
{
    const auto& b = a.base;
    const auto gs = attend_backward(tape.self, b.wq, b.wk, b.wv, b.wo, gy);
    const auto gc = attend_backward(tape.cross, a.wq_prime, b.wk, b.wv, a.wo_prime, gy);
    grads.base.wq += gs.wq;
    grads.base.wk += gs.wk + gc.wk;
    grads.base.wv += gs.wv + gc.wv;
    grads.base.wo += gs.wo;
    grads.wq_prime += gc.wq;
    grads.wo_prime += gc.wo;
    return {gs.xq + gs.xkv + gc.xq, gc.xkv};
}

} // namespace animate4d
