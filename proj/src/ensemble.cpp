#include "c2f/ensemble.hpp"

#include <cmath>

#include "c2f/errors.hpp"

namespace c2f {

EnsembleConfig EnsembleConfig::from_weights(const std::vector<double>& w) {
    if (w.size() != 6) throw ConfigError("ensemble: expected 6 alpha weights, got " + std::to_string(w.size()));
    double sum = 0.0;
    for (double a : w) {
        if (!(a >= 0.0)) throw ConfigError("ensemble: alpha weights must be nonnegative");
        sum += a;
    }
    if (sum <= 0.0) throw ConfigError("ensemble: alpha weights are all zero");
    EnsembleConfig cfg;
    for (int i = 0; i < 6; ++i) cfg.alpha[i] = w[i] / sum;
    return cfg;
}

EnsembleConfig EnsembleConfig::defaults() { return from_weights({0, 0, 1, 1, 1, 1}); }

EnsembleConfig EnsembleConfig::one_hot(int layer) {
    if (layer < 0 || layer >= 6) throw ConfigError("ensemble: layer index out of range");
    std::vector<double> w(6, 0.0);
    w[layer] = 1.0;
    return from_weights(w);
}

Matrix c2f_ensemble(const std::vector<Matrix>& layers, const EnsembleConfig& cfg, int t_out) {
    if (layers.size() != 6) throw ShapeError("ensemble: expected 6 layer outputs");
    const int C = layers[0].cols;
    Matrix acc(t_out, C, 0.0);
    for (int i = 0; i < 6; ++i) {
        if (cfg.alpha[i] == 0.0) continue;
        if (layers[i].cols != C) throw ShapeError("ensemble: class count mismatch across layers");
        Matrix up = ag::upsample_forward(layers[i], t_out);
        for (size_t k = 0; k < acc.v.size(); ++k) acc.v[k] += cfg.alpha[i] * up.v[k];
    }
    return acc;
}

ag::NodePtr c2f_ensemble(const std::vector<ag::NodePtr>& layers, const EnsembleConfig& cfg, int t_out) {
    if (layers.size() != 6) throw ShapeError("ensemble: expected 6 layer outputs");
    const int C = layers[0]->value.cols;
    ag::NodePtr acc;
    for (int i = 0; i < 6; ++i) {
        if (cfg.alpha[i] == 0.0) continue;
        if (layers[i]->value.cols != C) throw ShapeError("ensemble: class count mismatch across layers");
        auto term = ag::affine(ag::upsample_linear(layers[i], t_out), cfg.alpha[i], 0.0);
        acc = acc ? ag::add(acc, term) : term;
    }
    return acc;
}

Prediction predict_labels(const Matrix& p) {
    Prediction out;
    out.labels.resize(p.rows);
    out.confidence.resize(p.rows);
    for (int t = 0; t < p.rows; ++t) {
        int best = 0;
        double bv = p(t, 0);
        for (int c = 1; c < p.cols; ++c)
            if (p(t, c) > bv) {
                bv = p(t, c);
                best = c;
            }
        out.labels[t] = best;
        out.confidence[t] = bv;
    }
    return out;
}

}  // namespace c2f
