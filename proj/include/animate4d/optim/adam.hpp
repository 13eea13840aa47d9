#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/params.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace animate4d {

/// Bias-corrected Adam with one learning rate per parameter group.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> second;

    static AdamState like(const std::vector<ParamGroup>& params)
    {
        AdamState s;
        for (const auto& p : params) {
            s.first.emplace_back(p.values.size(), 0.0);
            s.second.emplace_back(p.values.size(), 0.0);
        }
        return s;
    }
};

/// One update of every group. lrs[g] is the learning rate of group g.
inline void adam_step(const std::vector<ParamGroup>& params, const GradBuffers& grads, AdamState& state,
                      std::span<const double> lrs)
{
    if (grads.groups.size() != params.size() || state.first.size() != params.size() || lrs.size() != params.size())
        throw ValidationError("adam_step: group count mismatch");
    for (std::size_t g = 0; g < params.size(); ++g)
        if (grads.groups[g].size() != params[g].values.size() || state.first[g].size() != params[g].values.size())
            throw ValidationError("adam_step: shape mismatch in group " + params[g].name);
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t g = 0; g < params.size(); ++g) {
        auto values = params[g].values;
        const auto& grad = grads.groups[g];
        auto& m = state.first[g];
        auto& v = state.second[g];
        const double lr = lrs[g];
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double gi = grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            values[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
        }
    }
}

} // namespace animate4d
