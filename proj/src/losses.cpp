#include "c2f/losses.hpp"

#include <set>

#include "c2f/errors.hpp"

namespace c2f {

namespace {

int count_valid(const Mask& mask) {
    int n = 0;
    for (auto m : mask) n += m ? 1 : 0;
    return n;
}

void check_labels(const std::vector<int>& y, const Mask& mask, int C, int T) {
    if (static_cast<int>(y.size()) != T || static_cast<int>(mask.size()) != T)
        throw ShapeError("loss: label/mask length mismatch");
    for (int t = 0; t < T; ++t)
        if (mask[t] && (y[t] < 0 || y[t] >= C))
            throw ValidationError("loss: label " + std::to_string(y[t]) + " out of range at frame " +
                                  std::to_string(t));
}

}  // namespace

void LossConfig::validate() const {
    if (lambda_tr < 0.0) throw ConfigError("loss: lambda_tr must be >= 0");
    if (!(eps_max > 0.0)) throw ConfigError("loss: eps_max must be > 0");
    if (!(prob_floor > 0.0 && prob_floor < 1.0)) throw ConfigError("loss: prob_floor must lie in (0, 1)");
}

ag::NodePtr cross_entropy(const ag::NodePtr& p, const std::vector<int>& y, const Mask& mask,
                          const LossConfig& cfg) {
    cfg.validate();
    const int T = p->value.rows, C = p->value.cols;
    check_labels(y, mask, C, T);
    const int n = count_valid(mask);
    if (n == 0) throw ValidationError("cross_entropy: no valid frames");
    Matrix w(T, C, 0.0);
    for (int t = 0; t < T; ++t)
        if (mask[t]) w(t, y[t]) = -1.0 / n;
    return ag::weighted_sum(ag::log_floor(p, cfg.prob_floor), w);
}

ag::NodePtr transition_loss(const ag::NodePtr& p, const Mask& mask, const LossConfig& cfg) {
    cfg.validate();
    const int T = p->value.rows, C = p->value.cols;
    if (static_cast<int>(mask.size()) != T) throw ShapeError("transition_loss: mask length mismatch");
    const int n = count_valid(mask);
    if (T < 2 || n == 0) return ag::constant(Matrix(1, 1, 0.0));
    auto lp = ag::log_floor(p, cfg.prob_floor);
    auto diff = ag::sub(ag::slice_rows(lp, 1, T), ag::slice_rows(lp, 0, T - 1));
    auto clipped = ag::clamp_max(ag::abs_val(diff), cfg.eps_max);
    auto sq = ag::mul(clipped, clipped);
    Matrix w(T - 1, C, 0.0);
    for (int t = 0; t + 1 < T; ++t)
        if (mask[t] && mask[t + 1])
            for (int c = 0; c < C; ++c) w(t, c) = 1.0 / n;
    return ag::weighted_sum(sq, w);
}

ag::NodePtr action_loss(const ag::NodePtr& p, const std::vector<int>& y, const Mask& mask,
                        const LossConfig& cfg) {
    cfg.validate();
    const int T = p->value.rows, C = p->value.cols;
    check_labels(y, mask, C, T);
    std::set<int> present;
    for (int t = 0; t < T; ++t)
        if (mask[t]) present.insert(y[t]);
    if (present.empty()) throw ValidationError("action_loss: no valid frames");
    auto pmax = ag::temporal_max(p, mask);  // 1 x C
    Matrix w_pres(1, C, 0.0), w_abs(1, C, 0.0);
    for (int c = 0; c < C; ++c)
        (present.count(c) ? w_pres : w_abs)(0, c) = -1.0;
    auto on = ag::weighted_sum(ag::log_floor(pmax, cfg.prob_floor), w_pres);
    auto off = ag::weighted_sum(ag::log_floor(ag::affine(pmax, -1.0, 1.0), cfg.prob_floor), w_abs);
    return ag::add(on, off);
}

JointLoss joint_loss(const ag::NodePtr& p, const std::vector<int>& y, const Mask& mask,
                     const LossConfig& cfg) {
    JointLoss out;
    out.ce = cross_entropy(p, y, mask, cfg);
    out.tr = transition_loss(p, mask, cfg);
    out.al = action_loss(p, y, mask, cfg);
    out.total = ag::add(ag::add(out.al, out.ce), ag::affine(out.tr, cfg.lambda_tr, 0.0));
    return out;
}

ag::NodePtr recognition_loss(const ag::NodePtr& p_v, int y_v, const LossConfig& cfg) {
    cfg.validate();
    if (p_v->value.rows != 1) throw ShapeError("recognition_loss: expected a 1xK distribution");
    if (y_v < 0 || y_v >= p_v->value.cols)
        throw ValidationError("recognition_loss: activity label out of range");
    Matrix w(1, p_v->value.cols, 0.0);
    w(0, y_v) = -1.0;
    return ag::weighted_sum(ag::log_floor(p_v, cfg.prob_floor), w);
}

}  // namespace c2f
