#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "c2f/matrix.hpp"

namespace c2f::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One value in the computation graph. Backward functions read this node's
// grad and accumulate into the parents' grads.
struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.rows != value.rows || grad.cols != value.cols) grad = Matrix(value.rows, value.cols);
    }
};

NodePtr constant(Matrix v);
NodePtr param(Matrix v);

// While active, ops neither build backward closures nor retain parents.
bool no_grad_active();
struct NoGradGuard {
    bool prev;
    NoGradGuard();
    ~NoGradGuard();
};

// Counter bumped by ops whose forward pass lands near a non-differentiable
// point (ReLU zero, pool tie, clamp edge, log floor). grad_check resamples
// whenever a trial touches one.
int& kink_count();
double& kink_tol();

void zero_grad(const std::vector<NodePtr>& params);
void backward(const NodePtr& root);  // root must be 1x1

// Running statistics and affine parameters of one BatchNorm1D unit.
struct BatchNormState {
    NodePtr gamma;  // 1 x C
    NodePtr beta;   // 1 x C
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNormState() = default;
    explicit BatchNormState(int channels);
    int channels() const { return gamma ? gamma->value.cols : 0; }
};

// --- Forward helpers shared with non-graph callers ---

// Endpoint-aligned linear interpolation of src (Ts x C) to Td rows.
Matrix upsample_forward(const Matrix& src, int target_len);

// --- Ops ---

// Cross-correlation along time with zero padding. weights is Cout x (Cin*k),
// row o laid out [ci*k + tap]; bias is 1 x Cout. pad must equal (k-1)/2.
NodePtr conv1d(const NodePtr& x, const NodePtr& weights, const NodePtr& bias, int cin, int cout, int k, int pad);

// Non-overlapping windowed max, stride = window; trailing remainder dropped.
NodePtr maxpool1d(const NodePtr& x, int window);

NodePtr upsample_linear(const NodePtr& x, int target_len);

// mask restricts training statistics to valid frames; eval uses running stats.
NodePtr batchnorm(const NodePtr& x, const Mask& mask, BatchNormState& state, bool training);

NodePtr relu(const NodePtr& x);
NodePtr log_floor(const NodePtr& x, double floor = 1e-8);
NodePtr softmax_rows(const NodePtr& x);

NodePtr concat_cols(const NodePtr& a, const NodePtr& b);
NodePtr concat_rows(const std::vector<NodePtr>& xs);
NodePtr slice_rows(const NodePtr& x, int r0, int r1);

NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr affine(const NodePtr& x, double scale, double shift);
NodePtr clamp_max(const NodePtr& x, double cap);
NodePtr abs_val(const NodePtr& x);

// Per-channel max over valid frames, 1 x C; gradient routes to the earliest
// maximal valid frame.
NodePtr temporal_max(const NodePtr& x, const Mask& mask);

// Scalar sum of x .* w; w is a plain constant the same shape as x.
NodePtr weighted_sum(const NodePtr& x, const Matrix& w);
NodePtr mean_all(const NodePtr& x);

inline double scalar_value(const NodePtr& n) { return n->value(0, 0); }

// --- Gradient checking ---

// Rebuilds the graph from a seeded rng each call; must return a 1x1 scalar.
using GraphBuilder = std::function<NodePtr(std::mt19937_64&)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    int resamples = 0;
    bool ok = false;
};

// Compares analytic gradients of every params element against central finite
// differences. Trials that touch a kink (see kink_count) are resampled.
GradCheckResult grad_check(const GraphBuilder& build, const std::vector<NodePtr>& params, double step = 1e-5,
                           double threshold = 1e-4, std::uint64_t seed = 0, int max_resamples = 30);

}  // namespace c2f::ag
