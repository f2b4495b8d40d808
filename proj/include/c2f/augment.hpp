#pragma once

#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "c2f/matrix.hpp"

namespace c2f {

// pi(w0) = pi0, pi(w) = (1-pi0)/r on the rest of [w_min, w_max].
struct WindowDistribution {
    int w0 = 0;
    double pi0 = 0.5;
    int w_min = 0;
    int w_max = 0;

    int range() const { return w_max - w_min; }
    double prob(int w) const;
    // (window, probability) pairs in ascending window order; zero-prob entries omitted.
    std::vector<std::pair<int, double>> support() const;
};

WindowDistribution build_distribution(int w0, double pi0 = 0.5);

struct PooledSample {
    Matrix features;         // ceil(T/w) x d
    std::vector<int> labels;  // majority vote per window
    int window = 1;
};

// Windows [wt, wt+w), last one truncated: per-channel max + majority label
// (ties toward the earliest-occurring label in the window).
PooledSample pool_features(const Matrix& f, const std::vector<int>& y, int w);
Matrix pool_features_only(const Matrix& f, int w);

int sample_window(const WindowDistribution& dist, std::mt19937_64& rng);

// Exact expectation over the support: sum_w pi(w) * Up[infer(pool(f, w))].
// t_out < 1 means "original length".
using InferFn = std::function<Matrix(const Matrix&)>;
Matrix test_time_aggregate(const InferFn& infer, const Matrix& f, const WindowDistribution& dist, int t_out = -1);

}  // namespace c2f
