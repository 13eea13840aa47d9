#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/io.hpp"
#include "animate4d/core/params.hpp"
#include "animate4d/losses/sds.hpp"
#include "animate4d/mvvdm/attention.hpp"
#include "animate4d/mvvdm/latent.hpp"
#include "animate4d/optim/adam.hpp"

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace animate4d {

struct DenoiserConfig {
    int latent_channels = 12;
    int width = 16;          ///< token width, divisible by 4
    int layers = 1;
    int mix_hidden = 32;
    int camera_hidden = 32;
};

inline void validate(const DenoiserConfig& c)
{
    detail::require(c.latent_channels >= 1 && c.layers >= 1 && c.mix_hidden >= 1 && c.camera_hidden >= 1,
                    "denoiser sizes must be positive");
    detail::require(c.width >= 4 && c.width % 4 == 0, "denoiser width must be a positive multiple of 4");
}

struct EmbeddingTape;

/// Per-token two-layer perceptron with a residual added by the caller.
struct ChannelMix {
    Eigen::MatrixXd w1, b1, w2, b2;
};

struct DenoiserLayer {
    MV2VAdapter adapter;
    SpatioTemporalBlock st;
    ChannelMix mix;
};

/// Desk-scale multi-view video denoiser. Predicts the noise of frames 1.. given the clean
/// frame-0 latent, which reaches the noisy stream only through each layer's adapter.
///
/// Per layer:  cond  <- cond + base_attention(cond)
///             x     <- x + adapter(x, cond)        (per frame, all views as one sequence)
///             x     <- x + spatiotemporal(x)
///             x     <- x + mix(x)
/// Conditioning: sinusoidal timestep embedding -> MLP, flattened camera extrinsics -> MLP,
/// and a fixed text vector, summed per view and added to the input tokens.
class ToyDenoiser {
public:
    ToyDenoiser() = default;

    explicit ToyDenoiser(const DenoiserConfig& config, std::uint64_t seed = 0) : config_(config)
    {
        validate(config_);
        std::mt19937_64 rng(seed);
        const int d = config_.width;
        auto normal = [&](int rows, int cols, double stddev) {
            std::normal_distribution<double> dist(0.0, stddev);
            Eigen::MatrixXd m(rows, cols);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
            return m;
        };
        w_in_ = normal(config_.latent_channels, d, 1.0 / std::sqrt(config_.latent_channels));
        b_in_ = Eigen::MatrixXd::Zero(1, d);
        time_w1_ = normal(d, d, 1.0 / std::sqrt(d));
        time_b1_ = Eigen::MatrixXd::Zero(1, d);
        time_w2_ = normal(d, d, 1.0 / std::sqrt(d));
        time_b2_ = Eigen::MatrixXd::Zero(1, d);
        cam_w1_ = normal(12, config_.camera_hidden, 1.0 / std::sqrt(12.0));
        cam_b1_ = Eigen::MatrixXd::Zero(1, config_.camera_hidden);
        cam_w2_ = normal(config_.camera_hidden, d, 1.0 / std::sqrt(config_.camera_hidden));
        cam_b2_ = Eigen::MatrixXd::Zero(1, d);
        text_ = normal(1, d, 0.1);
        for (int l = 0; l < config_.layers; ++l) {
            DenoiserLayer layer;
            layer.adapter = MV2VAdapter::random(d, rng);
            layer.st = SpatioTemporalBlock::random(d, rng);
            layer.mix.w1 = normal(d, config_.mix_hidden, 1.0 / std::sqrt(d));
            layer.mix.b1 = Eigen::MatrixXd::Zero(1, config_.mix_hidden);
            layer.mix.w2 = normal(config_.mix_hidden, d, 1.0 / std::sqrt(config_.mix_hidden));
            layer.mix.b2 = Eigen::MatrixXd::Zero(1, d);
            layers_.push_back(std::move(layer));
        }
        w_out_ = normal(d, config_.latent_channels, 1.0 / std::sqrt(d));
        b_out_ = Eigen::MatrixXd::Zero(1, config_.latent_channels);
    }

    [[nodiscard]] const DenoiserConfig& config() const { return config_; }
    [[nodiscard]] std::vector<DenoiserLayer>& layers() { return layers_; }
    [[nodiscard]] const std::vector<DenoiserLayer>& layers() const { return layers_; }

    /// Same structure with every tensor zeroed; used as a gradient accumulator.
    [[nodiscard]] ToyDenoiser zeros_like() const
    {
        ToyDenoiser z = *this;
        z.visit([](const std::string&, Eigen::MatrixXd& m, bool) { m.setZero(); });
        return z;
    }

    /// Calls fn(name, tensor, trainable) for every tensor in a fixed order.
    template <typename Fn>
    void visit(Fn&& fn)
    {
        fn("in.w", w_in_, true);
        fn("in.b", b_in_, true);
        fn("time.w1", time_w1_, true);
        fn("time.b1", time_b1_, true);
        fn("time.w2", time_w2_, true);
        fn("time.b2", time_b2_, true);
        fn("camera.w1", cam_w1_, true);
        fn("camera.b1", cam_b1_, true);
        fn("camera.w2", cam_w2_, true);
        fn("camera.b2", cam_b2_, true);
        fn("text", text_, false);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            auto& L = layers_[l];
            const std::string p = "layer" + std::to_string(l) + ".";
            fn(p + "adapter.base.wq", L.adapter.base.wq, false);
            fn(p + "adapter.base.wk", L.adapter.base.wk, false);
            fn(p + "adapter.base.wv", L.adapter.base.wv, false);
            fn(p + "adapter.base.wo", L.adapter.base.wo, false);
            fn(p + "adapter.wq_prime", L.adapter.wq_prime, true);
            fn(p + "adapter.wo_prime", L.adapter.wo_prime, true);
            fn(p + "st.spatial.wq", L.st.spatial.wq, true);
            fn(p + "st.spatial.wk", L.st.spatial.wk, true);
            fn(p + "st.spatial.wv", L.st.spatial.wv, true);
            fn(p + "st.spatial.wo", L.st.spatial.wo, true);
            fn(p + "st.temporal.wq", L.st.temporal.wq, true);
            fn(p + "st.temporal.wk", L.st.temporal.wk, true);
            fn(p + "st.temporal.wv", L.st.temporal.wv, true);
            fn(p + "st.temporal.wo", L.st.temporal.wo, true);
            fn(p + "st.blend_logit", L.st.blend_logit, true);
            fn(p + "mix.w1", L.mix.w1, true);
            fn(p + "mix.b1", L.mix.b1, true);
            fn(p + "mix.w2", L.mix.w2, true);
            fn(p + "mix.b2", L.mix.b2, true);
        }
        fn("out.w", w_out_, true);
        fn("out.b", b_out_, true);
    }

    /// Copies of all tensors in visit order with their names and trainability.
    struct TensorInfo {
        std::string name;
        Eigen::Index rows, cols;
        bool trainable;
    };
    [[nodiscard]] std::vector<TensorInfo> tensor_infos()
    {
        std::vector<TensorInfo> out;
        visit([&](const std::string& n, Eigen::MatrixXd& m, bool t) { out.push_back({n, m.rows(), m.cols(), t}); });
        return out;
    }

    /// Flattened values of every tensor (visit order, row-major within a tensor).
    [[nodiscard]] std::vector<double> flatten()
    {
        std::vector<double> out;
        visit([&](const std::string&, Eigen::MatrixXd& m, bool) {
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
        });
        return out;
    }

    void unflatten(std::span<const double> values)
    {
        std::size_t i = 0;
        visit([&](const std::string&, Eigen::MatrixXd& m, bool) {
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) {
                    if (i >= values.size()) throw ValidationError("denoiser parameter buffer too short");
                    m(r, c) = values[i++];
                }
        });
        if (i != values.size()) throw ValidationError("denoiser parameter buffer too long");
    }

    struct Tape;

    /// Predicted noise for frames 1.., shaped like `noisy`.
    [[nodiscard]] LatentVideo predict(const LatentVideo& clean_first, const LatentVideo& noisy, int timestep,
                                      std::span<const Camera> cameras, Tape* tape = nullptr) const;

    /// Adds gradients of a loss (given d loss / d prediction) into `grads`.
    void backward(const Tape& tape, const LatentVideo& grad_prediction, ToyDenoiser& grads) const;

    /// Conditioning vector of every view; exposed for tests.
    [[nodiscard]] Eigen::MatrixXd view_embeddings(int timestep, int views, std::span<const Camera> cameras,
                                                  EmbeddingTape* tape = nullptr) const;

private:
    DenoiserConfig config_;
    Eigen::MatrixXd w_in_, b_in_;
    Eigen::MatrixXd time_w1_, time_b1_, time_w2_, time_b2_;
    Eigen::MatrixXd cam_w1_, cam_b1_, cam_w2_, cam_b2_;
    Eigen::MatrixXd text_;
    std::vector<DenoiserLayer> layers_;
    Eigen::MatrixXd w_out_, b_out_;
};

inline Eigen::RowVectorXd timestep_encoding(int timestep, int width)
{
    Eigen::RowVectorXd e(width);
    const int half = width / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k) / half);
        e[k] = std::sin(timestep * freq);
        e[half + k] = std::cos(timestep * freq);
    }
    return e;
}

/// Extrinsics flattened as 9 rotation entries (row-major) then translation; zeros without a camera.
inline Eigen::MatrixXd camera_features(std::span<const Camera> cameras, int views)
{
    detail::require(cameras.empty() || static_cast<int>(cameras.size()) == views,
                    "denoiser needs one camera per view");
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(views, 12);
    for (int v = 0; v < static_cast<int>(cameras.size()); ++v) {
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) f(v, a * 3 + b) = cameras[v].rotation(a, b);
        for (int a = 0; a < 3; ++a) f(v, 9 + a) = cameras[v].translation[a];
    }
    return f;
}

struct EmbeddingTape {
    Eigen::MatrixXd time_in, time_h, cam_in, cam_h;
};

struct ChannelMixTape {
    Eigen::MatrixXd x, h;
};

struct ToyDenoiser::Tape {
    VideoLayout noisy_layout, cond_layout;
    EmbeddingTape embedding;
    Eigen::MatrixXd noisy_in, cond_in;
    struct Layer {
        Eigen::MatrixXd cond_in;
        std::vector<AttentionTape> cond_self;           ///< per batch
        std::vector<AdapterTape> adapter;                ///< per (batch, frame)
        SpatioTemporalTape st;
        ChannelMixTape mix;
    };
    std::vector<Layer> layers;
    Eigen::MatrixXd final_tokens;
};

inline Eigen::MatrixXd ToyDenoiser::view_embeddings(int timestep, int views, std::span<const Camera> cameras,
                                                     EmbeddingTape* tape) const
{
    const Eigen::MatrixXd t_in = timestep_encoding(timestep, config_.width);
    const Eigen::MatrixXd t_h = ((t_in * time_w1_) + time_b1_).array().tanh();
    const Eigen::MatrixXd t_out = t_h * time_w2_ + time_b2_;
    const Eigen::MatrixXd c_in = camera_features(cameras, views);
    const Eigen::MatrixXd c_h = ((c_in * cam_w1_).rowwise() + cam_b1_.row(0)).array().tanh();
    Eigen::MatrixXd e = (c_h * cam_w2_).rowwise() + cam_b2_.row(0);
    e.rowwise() += t_out.row(0) + text_.row(0);
    if (tape) *tape = {t_in, t_h, c_in, c_h};
    return e;
}

namespace detail {

inline Eigen::MatrixXd mix_forward(const ChannelMix& m, const Eigen::MatrixXd& x, ChannelMixTape* tape)
{
    Eigen::MatrixXd h = ((x * m.w1).rowwise() + m.b1.row(0)).array().tanh();
    Eigen::MatrixXd y = (h * m.w2).rowwise() + m.b2.row(0);
    if (tape) *tape = {x, std::move(h)};
    return y;
}

inline Eigen::MatrixXd mix_backward(const ChannelMix& m, const ChannelMixTape& t, const Eigen::MatrixXd& gy,
                                    ChannelMix& g)
{
    g.w2 += t.h.transpose() * gy;
    g.b2 += gy.colwise().sum();
    const Eigen::MatrixXd gh = (gy * m.w2.transpose()).array() * (1.0 - t.h.array().square());
    g.w1 += t.x.transpose() * gh;
    g.b1 += gh.colwise().sum();
    return gh * m.w1.transpose();
}

/// Rows of the condition stream (one frame) that belong to batch b.
inline std::vector<int> cond_rows(const VideoLayout& cond, int b)
{
    std::vector<int> rows;
    for (int v = 0; v < cond.views; ++v)
        for (int y = 0; y < cond.height; ++y)
            for (int x = 0; x < cond.width; ++x) rows.push_back(cond.row(b, v, 0, y, x));
    return rows;
}

} // namespace detail

inline LatentVideo ToyDenoiser::predict(const LatentVideo& clean_first, const LatentVideo& noisy, int timestep,
                                        std::span<const Camera> cameras, Tape* tape) const
{
    if (clean_first.frames() != 1 || clean_first.batch() != noisy.batch() || clean_first.views() != noisy.views() ||
        clean_first.height() != noisy.height() || clean_first.width() != noisy.width() ||
        clean_first.channels() != noisy.channels())
        throw ValidationError("denoiser: condition frame and noisy frames have inconsistent shapes");
    if (noisy.channels() != config_.latent_channels)
        throw ValidationError("denoiser: latent has " + std::to_string(noisy.channels()) + " channels, model expects " +
                              std::to_string(config_.latent_channels));
    const VideoLayout nl = VideoLayout::of(noisy);
    const VideoLayout cl = VideoLayout::of(clean_first);
    const Eigen::MatrixXd embed = view_embeddings(timestep, nl.views, cameras, tape ? &tape->embedding : nullptr);

    auto embed_tokens = [&](const LatentVideo& z, const VideoLayout& l) {
        Eigen::MatrixXd x = to_tokens(z) * w_in_;
        x.rowwise() += b_in_.row(0);
        const int per_view = l.frames * l.height * l.width;
        for (Eigen::Index r = 0; r < x.rows(); ++r) x.row(r) += embed.row((r / per_view) % l.views);
        return x;
    };
    if (tape) {
        tape->noisy_layout = nl;
        tape->cond_layout = cl;
        tape->noisy_in = to_tokens(noisy);
        tape->cond_in = to_tokens(clean_first);
        tape->layers.assign(layers_.size(), {});
    }
    Eigen::MatrixXd x = embed_tokens(noisy, nl);
    Eigen::MatrixXd cond = embed_tokens(clean_first, cl);
    const auto sgroups = spatial_groups(nl);

    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const auto& L = layers_[li];
        Tape::Layer* lt = tape ? &tape->layers[li] : nullptr;
        if (lt) {
            lt->cond_in = cond;
            lt->cond_self.resize(nl.batch);
            lt->adapter.resize(sgroups.size());
        }
        // Adapter over each frame, querying this layer's condition features.
        Eigen::MatrixXd adapted = Eigen::MatrixXd::Zero(x.rows(), x.cols());
        for (int b = 0; b < nl.batch; ++b) {
            const Eigen::MatrixXd c_b = gather_rows(cond, detail::cond_rows(cl, b));
            for (int f = 0; f < nl.frames; ++f) {
                const auto& rows = sgroups[static_cast<std::size_t>(b * nl.frames + f)];
                scatter_add_rows(adapted, rows,
                                 mv2v_adapter(L.adapter, gather_rows(x, rows), c_b,
                                              lt ? &lt->adapter[static_cast<std::size_t>(b * nl.frames + f)] : nullptr));
            }
        }
        // Condition stream advances through the frozen base attention only.
        Eigen::MatrixXd cond_next = cond;
        for (int b = 0; b < nl.batch; ++b) {
            const auto rows = detail::cond_rows(cl, b);
            const auto& w = L.adapter.base;
            const Eigen::MatrixXd c_b = gather_rows(cond, rows);
            scatter_add_rows(cond_next, rows, attend(c_b, c_b, w.wq, w.wk, w.wv, w.wo, lt ? &lt->cond_self[b] : nullptr));
        }
        cond = std::move(cond_next);
        x += adapted;
        x += spatiotemporal_tokens(L.st, x, nl, lt ? &lt->st : nullptr);
        x += detail::mix_forward(L.mix, x, lt ? &lt->mix : nullptr);
    }
    if (tape) tape->final_tokens = x;
    Eigen::MatrixXd out = x * w_out_;
    out.rowwise() += b_out_.row(0);
    return from_tokens(out, nl);
}

inline void ToyDenoiser::backward(const Tape& tape, const LatentVideo& grad_prediction, ToyDenoiser& g) const
{
    const VideoLayout& nl = tape.noisy_layout;
    const VideoLayout& cl = tape.cond_layout;
    const Eigen::MatrixXd gy = to_tokens(grad_prediction);
    if (gy.rows() != nl.tokens() || gy.cols() != config_.latent_channels)
        throw ValidationError("denoiser backward: gradient shape mismatch");
    g.w_out_ += tape.final_tokens.transpose() * gy;
    g.b_out_ += gy.colwise().sum();
    Eigen::MatrixXd gx = gy * w_out_.transpose();
    Eigen::MatrixXd gcond = Eigen::MatrixXd::Zero(cl.tokens(), config_.width);
    const auto sgroups = spatial_groups(nl);

    for (std::size_t li = layers_.size(); li-- > 0;) {
        const auto& L = layers_[li];
        auto& G = g.layers_[li];
        const auto& lt = tape.layers[li];
        gx += detail::mix_backward(L.mix, lt.mix, gx, G.mix);
        gx += spatiotemporal_tokens_backward(L.st, lt.st, nl, gx, G.st);
        // cond_next = cond + base(cond): gradient flows through the identity and the base attention.
        Eigen::MatrixXd gcond_prev = gcond;
        for (int b = 0; b < nl.batch; ++b) {
            const auto rows = detail::cond_rows(cl, b);
            const auto& w = L.adapter.base;
            const auto ag = attend_backward(lt.cond_self[b], w.wq, w.wk, w.wv, w.wo, gather_rows(gcond, rows));
            G.adapter.base.wq += ag.wq;
            G.adapter.base.wk += ag.wk;
            G.adapter.base.wv += ag.wv;
            G.adapter.base.wo += ag.wo;
            scatter_add_rows(gcond_prev, rows, ag.xq + ag.xkv);
        }
        // x_next = x + adapter(x, cond)
        Eigen::MatrixXd gx_prev = gx;
        for (int b = 0; b < nl.batch; ++b) {
            const auto crow = detail::cond_rows(cl, b);
            for (int f = 0; f < nl.frames; ++f) {
                const auto idx = static_cast<std::size_t>(b * nl.frames + f);
                const auto ig = mv2v_adapter_backward(L.adapter, lt.adapter[idx], gather_rows(gx, sgroups[idx]),
                                                      G.adapter);
                scatter_add_rows(gx_prev, sgroups[idx], ig.noisy);
                scatter_add_rows(gcond_prev, crow, ig.cond);
            }
        }
        gx = std::move(gx_prev);
        gcond = std::move(gcond_prev);
    }

    // Input projection and embeddings.
    g.w_in_ += tape.noisy_in.transpose() * gx + tape.cond_in.transpose() * gcond;
    g.b_in_ += gx.colwise().sum() + gcond.colwise().sum();
    Eigen::MatrixXd g_embed = Eigen::MatrixXd::Zero(nl.views, config_.width);
    auto add_embed = [&](const Eigen::MatrixXd& grad, const VideoLayout& l) {
        const int per_view = l.frames * l.height * l.width;
        for (Eigen::Index r = 0; r < grad.rows(); ++r) g_embed.row((r / per_view) % l.views) += grad.row(r);
    };
    add_embed(gx, nl);
    add_embed(gcond, cl);

    const auto& e = tape.embedding;
    const Eigen::MatrixXd g_time = g_embed.colwise().sum();
    g.time_w2_ += e.time_h.transpose() * g_time;
    g.time_b2_ += g_time;
    const Eigen::MatrixXd g_th = (g_time * time_w2_.transpose()).array() * (1.0 - e.time_h.array().square());
    g.time_w1_ += e.time_in.transpose() * g_th;
    g.time_b1_ += g_th;
    g.text_ += g_time;
    g.cam_w2_ += e.cam_h.transpose() * g_embed;
    g.cam_b2_ += g_embed.colwise().sum();
    const Eigen::MatrixXd g_ch = (g_embed * cam_w2_.transpose()).array() * (1.0 - e.cam_h.array().square());
    g.cam_w1_ += e.cam_in.transpose() * g_ch;
    g.cam_b1_ += g_ch.colwise().sum();
}

/// Convenience wrapper with the operation's name.
inline LatentVideo predict_noise(const ToyDenoiser& model, const LatentVideo& clean_first, const LatentVideo& noisy,
                                 int timestep, std::span<const Camera> cameras)
{
    return model.predict(clean_first, noisy, timestep, cameras);
}

/// Adapter so a ToyDenoiser can drive sds_loss.
class DenoiserPredictor : public NoisePredictor {
public:
    explicit DenoiserPredictor(const ToyDenoiser& model) : model_(&model) {}
    LatentVideo predict(const NoiseQuery& q) override
    {
        return model_->predict(q.clean_first, q.noisy, q.timestep, q.cameras);
    }

private:
    const ToyDenoiser* model_;
};

// ---------------------------------------------------------------------------
// Training

/// Mean squared error over frames 1.. only; frame 0 of both tensors is ignored.
inline double noise_prediction_loss(const LatentVideo& predicted, const LatentVideo& target, LatentVideo* grad = nullptr)
{
    if (!predicted.same_shape(target)) throw ValidationError("noise_prediction_loss: shape mismatch");
    detail::require(predicted.frames() >= 2, "noise_prediction_loss needs at least two frames");
    const LatentVideo p = predicted.frame_slice(1, predicted.frames() - 1);
    const LatentVideo t = target.frame_slice(1, target.frames() - 1);
    const double inv = 1.0 / static_cast<double>(p.size());
    double loss = 0.0;
    LatentVideo g = p;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p.data()[i] - t.data()[i];
        loss += d * d * inv;
        g.data()[i] = 2.0 * d * inv;
    }
    if (grad) {
        *grad = LatentVideo(predicted.batch(), predicted.views(), predicted.frames(), predicted.height(),
                            predicted.width(), predicted.channels());
        grad->set_frames(1, g);
    }
    return loss;
}

/// Optimizer state restricted to the trainable tensors.
struct DenoiserTrainer {
    double learning_rate = 1e-3;
    AdamState adam;
    bool initialized = false;
};

namespace detail {

inline std::vector<ParamGroup> trainable_groups(ToyDenoiser& m)
{
    std::vector<ParamGroup> groups;
    m.visit([&](const std::string& name, Eigen::MatrixXd& t, bool trainable) {
        if (trainable) groups.push_back({name, std::span<double>(t.data(), static_cast<std::size_t>(t.size()))});
    });
    return groups;
}

} // namespace detail

/// One step of the first-frame-clean diffusion objective: sample t and noise, noise frames
/// 1.., predict, take the MSE over frames 1.., and update every trainable tensor. The frozen
/// base attention projections and the text vector are never written.
template <typename Rng>
double train_step(ToyDenoiser& model, DenoiserTrainer& trainer, const LatentVideo& batch,
                  const NoiseSchedule& schedule, Rng& rng, std::span<const Camera> cameras = {})
{
    detail::require(batch.frames() >= 2, "train_step needs at least two frames");
    const int t = std::uniform_int_distribution<int>(0, schedule.steps() - 1)(rng);
    const NoisedLatent noised = forward_noise(batch, t, schedule, rng);
    const LatentVideo clean_first = batch.frame_slice(0, 1);
    const LatentVideo noisy_tail = noised.noisy.frame_slice(1, batch.frames() - 1);

    ToyDenoiser::Tape tape;
    const LatentVideo pred = model.predict(clean_first, noisy_tail, t, cameras, &tape);
    LatentVideo pred_full(batch.batch(), batch.views(), batch.frames(), batch.height(), batch.width(),
                          batch.channels());
    pred_full.set_frames(1, pred);
    LatentVideo target_full = pred_full;
    target_full.set_frames(1, noised.noise);
    LatentVideo grad_full;
    const double loss = noise_prediction_loss(pred_full, target_full, &grad_full);
    if (!std::isfinite(loss)) throw NumericError("denoiser training produced a non-finite loss");

    ToyDenoiser grads = model.zeros_like();
    model.backward(tape, grad_full.frame_slice(1, batch.frames() - 1), grads);

    auto params = detail::trainable_groups(model);
    auto grad_groups = detail::trainable_groups(grads);
    GradBuffers gb;
    for (const auto& g : grad_groups) gb.groups.emplace_back(g.values.begin(), g.values.end());
    if (!trainer.initialized) {
        trainer.adam = AdamState::like(params);
        trainer.initialized = true;
    }
    std::vector<double> lrs(params.size(), trainer.learning_rate);
    adam_step(params, gb, trainer.adam, lrs);
    return loss;
}

// ---------------------------------------------------------------------------
// Checkpoint: tagged blob; header lists config and tensors, payload is row-major f32.

inline constexpr std::string_view kDenoiserMagic = "A4DDENOI";

inline void save_denoiser(ToyDenoiser& model, const fs::path& path)
{
    const auto& c = model.config();
    Blob blob;
    blob.header = {{"format", "animate4d-denoiser"},
                   {"version", 1},
                   {"latent_channels", c.latent_channels},
                   {"width", c.width},
                   {"layers", c.layers},
                   {"mix_hidden", c.mix_hidden},
                   {"camera_hidden", c.camera_hidden}};
    json tensors = json::array();
    for (const auto& t : model.tensor_infos())
        tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"trainable", t.trainable}});
    blob.header["tensors"] = tensors;
    blob.payload = model.flatten();
    save_blob(path, kDenoiserMagic, blob);
}

inline ToyDenoiser load_denoiser(const fs::path& path)
{
    const Blob blob = load_blob(path, kDenoiserMagic);
    try {
        DenoiserConfig c;
        c.latent_channels = blob.header.at("latent_channels");
        c.width = blob.header.at("width");
        c.layers = blob.header.at("layers");
        c.mix_hidden = blob.header.at("mix_hidden");
        c.camera_hidden = blob.header.at("camera_hidden");
        ToyDenoiser model(c);
        model.unflatten(blob.payload);
        return model;
    } catch (const json::exception& e) {
        throw ValidationError("bad denoiser checkpoint header: " + std::string(e.what()));
    }
}

} // namespace animate4d
