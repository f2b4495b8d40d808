#pragma once

#include <vector>

#include "c2f/autodiff.hpp"
#include "c2f/matrix.hpp"

namespace c2f {

struct LossConfig {
    double lambda_tr = 0.15;
    double eps_max = 4.0;
    double prob_floor = 1e-8;

    void validate() const;
};

// -(1/N) sum over valid t of log p[t, y_t], with the probability floor.
ag::NodePtr cross_entropy(const ag::NodePtr& p, const std::vector<int>& y, const Mask& mask,
                          const LossConfig& cfg = {});

// (1/N) sum over valid consecutive pairs of ||min(|dlog p|, eps_max)||^2.
ag::NodePtr transition_loss(const ag::NodePtr& p, const Mask& mask, const LossConfig& cfg = {});

// Presence BCE on per-class temporal max probabilities.
ag::NodePtr action_loss(const ag::NodePtr& p, const std::vector<int>& y, const Mask& mask,
                        const LossConfig& cfg = {});

struct JointLoss {
    ag::NodePtr total;
    ag::NodePtr ce;
    ag::NodePtr tr;
    ag::NodePtr al;
};

// L = L_AL + L_CE + lambda_tr * L_TR
JointLoss joint_loss(const ag::NodePtr& p, const std::vector<int>& y, const Mask& mask,
                     const LossConfig& cfg = {});

// -log p_v[y_v] with floor; p_v is a 1xK distribution.
ag::NodePtr recognition_loss(const ag::NodePtr& p_v, int y_v, const LossConfig& cfg = {});

}  // namespace c2f
