#pragma once

#include <array>
#include <vector>

#include "c2f/autodiff.hpp"
#include "c2f/matrix.hpp"

namespace c2f {

// Convex weights over the six decoder heads (finest = index 5).
struct EnsembleConfig {
    std::array<double, 6> alpha{};

    // Validates and normalizes: nonnegative, not all zero, scaled to sum 1.
    static EnsembleConfig from_weights(const std::vector<double>& w);
    static EnsembleConfig defaults();  // (0, 0, 1/4, 1/4, 1/4, 1/4)
    static EnsembleConfig one_hot(int layer);
};

// p^ens_t = sum_i alpha_i * Up[p^(i)]_t, computed in probability space.
Matrix c2f_ensemble(const std::vector<Matrix>& layers, const EnsembleConfig& cfg, int t_out);

// Same combination built on the tape so losses can differentiate through it.
ag::NodePtr c2f_ensemble(const std::vector<ag::NodePtr>& layers, const EnsembleConfig& cfg, int t_out);

struct Prediction {
    std::vector<int> labels;
    std::vector<double> confidence;
};

// Per-frame argmax; ties go to the smallest class index.
Prediction predict_labels(const Matrix& p);

}  // namespace c2f
