#pragma once

#include "veye/policy.hpp"

#include <string>
#include <vector>

namespace veye {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    size_t probes = 0;
    double tolerance = 1e-4;
    bool passed = false;
};

// Central finite differences (64-bit, default h = 1e-5) against the analytic
// gradients, probing a few elements of every parameter tensor.
GradCheckResult run_gradcheck(const ModelConfig& cfg, std::uint64_t seed, int probes_per_tensor = 6,
                              double h = 1e-5, double tolerance = 1e-4);

// The three small configurations the gradcheck command sweeps.
std::vector<ModelConfig> gradcheck_toy_configs();

} // namespace veye
