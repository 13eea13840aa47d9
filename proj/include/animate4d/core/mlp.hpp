#pragma once

#include "animate4d/core/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace animate4d {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Fully connected network over a borrowed flat parameter buffer. Hidden layers use tanh;
/// the last layer is linear. Per layer the buffer holds W (out x in, row-major) then b (out).
/// Inputs are batches with one sample per row.
class MlpView {
public:
    MlpView() = default;
    explicit MlpView(std::vector<int> sizes) : sizes_(std::move(sizes))
    {
        detail::require(sizes_.size() >= 2, "an MLP needs at least input and output sizes");
    }

    [[nodiscard]] const std::vector<int>& sizes() const { return sizes_; }
    [[nodiscard]] int in_width() const { return sizes_.front(); }
    [[nodiscard]] int out_width() const { return sizes_.back(); }
    [[nodiscard]] std::size_t num_layers() const { return sizes_.size() - 1; }

    [[nodiscard]] std::size_t param_count() const
    {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
            n += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
        return n;
    }

    /// Xavier-uniform weights, zero biases. With zero_last the output layer starts at zero.
    template <typename Rng>
    void initialize(std::span<double> params, Rng& rng, bool zero_last) const
    {
        std::size_t offset = 0;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            const int in = sizes_[l], out = sizes_[l + 1];
            const double limit = std::sqrt(6.0 / (in + out));
            std::uniform_real_distribution<double> dist(-limit, limit);
            const bool last = l + 1 == num_layers();
            for (int i = 0; i < in * out; ++i) params[offset + i] = (last && zero_last) ? 0.0 : dist(rng);
            offset += static_cast<std::size_t>(in) * out;
            for (int i = 0; i < out; ++i) params[offset + i] = 0.0;
            offset += out;
        }
    }

    /// Post-activation outputs of every layer, input first; filled by forward for backward.
    using Tape = std::vector<Eigen::MatrixXd>;

    Eigen::MatrixXd forward(std::span<const double> params, const Eigen::MatrixXd& input, Tape* tape = nullptr) const
    {
        detail::require(input.cols() == in_width(), "MLP input width mismatch");
        Eigen::MatrixXd x = input;
        if (tape) {
            tape->clear();
            tape->push_back(x);
        }
        std::size_t offset = 0;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            const int in = sizes_[l], out = sizes_[l + 1];
            Eigen::Map<const RowMatrix> w(params.data() + offset, out, in);
            Eigen::Map<const Eigen::RowVectorXd> b(params.data() + offset + static_cast<std::size_t>(in) * out, out);
            offset += static_cast<std::size_t>(in) * out + out;
            Eigen::MatrixXd y = x * w.transpose();
            y.rowwise() += b;
            if (l + 1 < num_layers()) y = y.array().tanh();
            x = std::move(y);
            if (tape) tape->push_back(x);
        }
        return x;
    }

    /// Accumulates parameter gradients into grad_params and returns d/d-input.
    Eigen::MatrixXd backward(std::span<const double> params, const Tape& tape, const Eigen::MatrixXd& grad_output,
                             std::span<double> grad_params) const
    {
        std::vector<std::size_t> offsets(num_layers());
        std::size_t offset = 0;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            offsets[l] = offset;
            offset += static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
        }
        Eigen::MatrixXd g = grad_output;
        for (std::size_t l = num_layers(); l-- > 0;) {
            const int in = sizes_[l], out = sizes_[l + 1];
            if (l + 1 < num_layers()) g = g.array() * (1.0 - tape[l + 1].array().square());
            Eigen::Map<const RowMatrix> w(params.data() + offsets[l], out, in);
            Eigen::Map<RowMatrix> gw(grad_params.data() + offsets[l], out, in);
            Eigen::Map<Eigen::RowVectorXd> gb(grad_params.data() + offsets[l] + static_cast<std::size_t>(in) * out, out);
            gw.noalias() += g.transpose() * tape[l];
            gb += g.colwise().sum();
            g = g * w;
        }
        return g;
    }

private:
    std::vector<int> sizes_;
};

} // namespace animate4d
