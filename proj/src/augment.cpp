#include "c2f/augment.hpp"

#include <algorithm>
#include <unordered_map>

#include "c2f/autodiff.hpp"
#include "c2f/errors.hpp"

namespace c2f {

double WindowDistribution::prob(int w) const {
    if (w < w_min || w > w_max) return 0.0;
    if (w == w0) return pi0;
    return (1.0 - pi0) / range();
}

std::vector<std::pair<int, double>> WindowDistribution::support() const {
    std::vector<std::pair<int, double>> out;
    for (int w = w_min; w <= w_max; ++w) {
        double p = prob(w);
        if (p > 0.0) out.emplace_back(w, p);
    }
    return out;
}

WindowDistribution build_distribution(int w0, double pi0) {
    if (w0 < 2) throw ConfigError("window distribution: w0 must be >= 2, got " + std::to_string(w0));
    if (!(pi0 >= 0.0 && pi0 <= 1.0)) throw ConfigError("window distribution: pi0 must lie in [0, 1]");
    WindowDistribution d;
    d.w0 = w0;
    d.pi0 = pi0;
    d.w_min = w0 / 2;
    d.w_max = 2 * w0;
    return d;
}

Matrix pool_features_only(const Matrix& f, int w) {
    if (w < 1) throw ValidationError("pool_features: window must be >= 1");
    if (f.rows < 1) throw ShapeError("pool_features: empty feature sequence");
    const int T = f.rows, d = f.cols;
    const int Tw = (T + w - 1) / w;
    Matrix out(Tw, d);
    for (int i = 0; i < Tw; ++i) {
        const int lo = i * w, hi = std::min(T, lo + w);
        for (int c = 0; c < d; ++c) {
            double m = f(lo, c);
            for (int t = lo + 1; t < hi; ++t) m = std::max(m, f(t, c));
            out(i, c) = m;
        }
    }
    return out;
}

PooledSample pool_features(const Matrix& f, const std::vector<int>& y, int w) {
    if (static_cast<int>(y.size()) != f.rows) throw ShapeError("pool_features: label length mismatch");
    PooledSample s;
    s.window = w;
    s.features = pool_features_only(f, w);
    const int T = f.rows, Tw = s.features.rows;
    s.labels.resize(Tw);
    std::unordered_map<int, std::pair<int, int>> tally;  // label -> (count, first index)
    for (int i = 0; i < Tw; ++i) {
        const int lo = i * w, hi = std::min(T, lo + w);
        tally.clear();
        for (int t = lo; t < hi; ++t) {
            auto [it, fresh] = tally.try_emplace(y[t], 0, t);
            (void)fresh;
            ++it->second.first;
        }
        int best = y[lo];
        auto bs = tally[best];
        for (const auto& [label, cf] : tally)
            if (cf.first > bs.first || (cf.first == bs.first && cf.second < bs.second)) {
                best = label;
                bs = cf;
            }
        s.labels[i] = best;
    }
    return s;
}

int sample_window(const WindowDistribution& dist, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (u01(rng) < dist.pi0) return dist.w0;
    // Uniform over the support minus the base window.
    std::uniform_int_distribution<int> pick(0, dist.range() - 1);
    int k = pick(rng);
    int w = dist.w_min + k;
    if (w >= dist.w0) ++w;  // skip w0, keeping the draw uniform over the rest
    return w;
}

Matrix test_time_aggregate(const InferFn& infer, const Matrix& f, const WindowDistribution& dist, int t_out) {
    if (t_out < 1) t_out = f.rows;
    Matrix acc;
    for (const auto& [w, pw] : dist.support()) {
        Matrix p = infer(pool_features_only(f, w));
        Matrix up = ag::upsample_forward(p, t_out);
        if (acc.rows == 0) {
            acc = Matrix(t_out, up.cols, 0.0);
        } else if (up.cols != acc.cols) {
            throw ShapeError("test_time_aggregate: class count changed across windows");
        }
        for (size_t k = 0; k < acc.v.size(); ++k) acc.v[k] += pw * up.v[k];
    }
    if (acc.rows == 0) throw ValidationError("test_time_aggregate: empty window support");
    return acc;
}

}  // namespace c2f
