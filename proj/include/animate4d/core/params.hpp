#pragma once

#include <span>
#include <string>
#include <vector>

namespace animate4d {

/// Named view onto trainable values owned elsewhere. Writing through `values` mutates the owner.
struct ParamGroup {
    std::string name;
    std::span<double> values;
};

/// Gradient buffers shaped like a list of parameter groups.
struct GradBuffers {
    std::vector<std::vector<double>> groups;

    static GradBuffers like(const std::vector<ParamGroup>& params)
    {
        GradBuffers g;
        for (const auto& p : params) g.groups.emplace_back(p.values.size(), 0.0);
        return g;
    }

    void zero()
    {
        for (auto& v : groups) std::fill(v.begin(), v.end(), 0.0);
    }
};

} // namespace animate4d
