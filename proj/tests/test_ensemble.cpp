#include <cmath>
#include <random>

#include "c2f/ensemble.hpp"
#include "c2f/errors.hpp"
#include "doctest.h"

using namespace c2f;

namespace {

Matrix random_probs(std::mt19937_64& rng, int T, int C) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    Matrix m(T, C);
    for (int t = 0; t < T; ++t) {
        double s = 0;
        for (int c = 0; c < C; ++c) s += (m(t, c) = u(rng));
        for (int c = 0; c < C; ++c) m(t, c) /= s;
    }
    return m;
}

}  // namespace

TEST_CASE("ensemble config validation and defaults") {
    CHECK_THROWS_AS(EnsembleConfig::from_weights({0, 0, 0, 0, 0, 0}), ConfigError);
    CHECK_THROWS_AS(EnsembleConfig::from_weights({1, -1, 0, 0, 0, 1}), ConfigError);
    CHECK_THROWS_AS(EnsembleConfig::from_weights({1, 1, 1}), ConfigError);
    auto d = EnsembleConfig::defaults();
    CHECK(d.alpha[0] == 0.0);
    CHECK(d.alpha[1] == 0.0);
    for (int i = 2; i < 6; ++i) CHECK(d.alpha[i] == doctest::Approx(0.25));
}

TEST_CASE("ensemble weight normalization is scale invariant") {
    auto a = EnsembleConfig::from_weights({1, 2, 3, 4, 5, 6});
    auto b = EnsembleConfig::from_weights({10, 20, 30, 40, 50, 60});
    for (int i = 0; i < 6; ++i) CHECK(a.alpha[i] == doctest::Approx(b.alpha[i]).epsilon(1e-12));
    double sum = 0;
    for (double v : a.alpha) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ablation weight rows accepted verbatim") {
    const std::vector<std::vector<double>> rows = {
        {0, 0, 0, 0, 0, 1}, {0, 0, 0, 0, 1, 1}, {0, 0, 0, 1, 1, 1},
        {0, 0, 1, 1, 1, 1}, {0, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 1},
    };
    for (const auto& row : rows) {
        auto cfg = EnsembleConfig::from_weights(row);
        double sum = 0, nz = 0;
        for (double v : row) nz += v > 0 ? 1 : 0;
        for (int i = 0; i < 6; ++i) {
            sum += cfg.alpha[i];
            if (row[i] > 0) CHECK(cfg.alpha[i] == doctest::Approx(1.0 / nz));
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("half-half combination of two layers") {
    std::mt19937_64 rng(1);
    std::vector<Matrix> layers(6, random_probs(rng, 1, 2));
    layers[0] = Matrix(1, 2);
    layers[0](0, 0) = 0.6;
    layers[0](0, 1) = 0.4;
    layers[1] = Matrix(1, 2);
    layers[1](0, 0) = 0.2;
    layers[1](0, 1) = 0.8;
    auto out = c2f_ensemble(layers, EnsembleConfig::from_weights({1, 1, 0, 0, 0, 0}), 1);
    CHECK(out(0, 0) == doctest::Approx(0.4));
    CHECK(out(0, 1) == doctest::Approx(0.6));
}

TEST_CASE("one-hot alpha reproduces a single layer exactly") {
    std::mt19937_64 rng(2);
    std::vector<Matrix> layers;
    for (int i = 0; i < 6; ++i) layers.push_back(random_probs(rng, 8, 3));
    auto out = c2f_ensemble(layers, EnsembleConfig::one_hot(5), 8);
    for (size_t k = 0; k < out.v.size(); ++k) CHECK(out.v[k] == layers[5].v[k]);  // bit-exact, no interpolation
}

TEST_CASE("ensemble rows stay distributions across resolutions") {
    std::mt19937_64 rng(3);
    std::vector<Matrix> layers;
    for (int i = 0; i < 6; ++i) layers.push_back(random_probs(rng, 2 << i, 4));
    auto out = c2f_ensemble(layers, EnsembleConfig::defaults(), 64);
    for (int t = 0; t < out.rows; ++t) {
        double s = 0;
        for (int c = 0; c < out.cols; ++c) {
            CHECK(out(t, c) >= 0.0);
            s += out(t, c);
        }
        CHECK(std::abs(s - 1.0) < 1e-9);
    }
}

TEST_CASE("graph ensemble matches the plain path") {
    std::mt19937_64 rng(4);
    std::vector<Matrix> plain;
    std::vector<ag::NodePtr> nodes;
    for (int i = 0; i < 6; ++i) {
        plain.push_back(random_probs(rng, 3 + 2 * i, 3));
        nodes.push_back(ag::constant(plain.back()));
    }
    auto cfg = EnsembleConfig::from_weights({1, 1, 2, 2, 3, 3});
    auto a = c2f_ensemble(plain, cfg, 17);
    auto b = c2f_ensemble(nodes, cfg, 17);
    for (size_t k = 0; k < a.v.size(); ++k) CHECK(a.v[k] == doctest::Approx(b->value.v[k]).epsilon(1e-12));
}

TEST_CASE("gradients flow through the graph ensemble") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    std::vector<ag::NodePtr> params;
    for (int i = 0; i < 6; ++i) {
        Matrix m(4, 2);
        for (double& v : m.v) v = g(rng);
        params.push_back(ag::param(m));
    }
    Matrix w(9, 2);
    for (double& v : w.v) v = g(rng);
    auto res = ag::grad_check(
        [&](std::mt19937_64&) {
            std::vector<ag::NodePtr> layers;
            for (const auto& p : params) layers.push_back(ag::softmax_rows(p));
            return ag::weighted_sum(c2f_ensemble(layers, EnsembleConfig::defaults(), 9), w);
        },
        params);
    CHECK(res.ok);
}

TEST_CASE("predict_labels argmax and ties") {
    Matrix p(3, 3);
    p(0, 0) = 0.1;
    p(0, 1) = 0.7;
    p(0, 2) = 0.2;
    p(1, 0) = 0.5;
    p(1, 1) = 0.5;
    p(1, 2) = 0.0;
    p(2, 0) = 0.2;
    p(2, 1) = 0.3;
    p(2, 2) = 0.5;
    auto pr = predict_labels(p);
    CHECK(pr.labels == std::vector<int>{1, 0, 2});
    CHECK(pr.confidence[0] == doctest::Approx(0.7));
    CHECK(pr.confidence[1] == doctest::Approx(0.5));
}

TEST_CASE("confidence of a distribution is at least 1/C") {
    std::mt19937_64 rng(6);
    auto p = random_probs(rng, 50, 5);
    auto pr = predict_labels(p);
    for (double c : pr.confidence) {
        CHECK(c >= 1.0 / 5 - 1e-12);
        CHECK(c <= 1.0 + 1e-12);
    }
}
