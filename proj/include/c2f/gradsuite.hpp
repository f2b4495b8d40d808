#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2f/autodiff.hpp"
#include "c2f/model.hpp"

namespace c2f {

struct OpCheckResult {
    std::string name;
    int trials = 0;
    int rerolls = 0;  // trials restarted because every resample hit a kink
    double max_rel_err = 0.0;
    bool ok = true;
};

struct GradSuiteResult {
    std::vector<OpCheckResult> ops;
    double max_rel_err = 0.0;
    int total_trials = 0;
    bool ok = true;
};

// Model small enough for finite differences over every parameter.
ModelConfig tiny_gradcheck_config();

// Randomized central-difference checks: every op at small shapes, the loss
// composites, and the end-to-end joint + recognition losses on the tiny model.
GradSuiteResult run_gradient_suite(int per_op_trials = 100, int e2e_trials = 3,
                                   std::uint64_t seed = 0, double threshold = 1e-4);

}  // namespace c2f
