#include "c2f/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace c2f {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& val) {
    size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(val, &pos);
    } catch (const std::exception&) {
        throw ConfigError("bad value for '" + key + "': '" + val + "'");
    }
    if (pos != val.size()) throw ConfigError("bad value for '" + key + "': '" + val + "'");
    return x;
}

int to_int(const std::string& key, const std::string& val) {
    const double x = to_double(key, val);
    if (x != std::floor(x) || std::abs(x) > 2e9)
        throw ConfigError("bad value for '" + key + "': '" + val + "' (want an integer)");
    return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& val) {
    size_t pos = 0;
    unsigned long long x = 0;
    try {
        x = std::stoull(val, &pos);
    } catch (const std::exception&) {
        throw ConfigError("bad value for '" + key + "': '" + val + "'");
    }
    if (pos != val.size()) throw ConfigError("bad value for '" + key + "': '" + val + "'");
    return x;
}

bool to_bool(const std::string& key, const std::string& val) {
    if (val == "true" || val == "1") return true;
    if (val == "false" || val == "0") return false;
    throw ConfigError("bad value for '" + key + "': '" + val + "' (want true/false)");
}

std::vector<double> to_double_list(const std::string& key, const std::string& val) {
    std::vector<double> out;
    std::string item;
    std::istringstream ss(val);
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
    if (out.empty()) throw ConfigError("bad value for '" + key + "': '" + val + "'");
    return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& val) {
    std::vector<int> out;
    std::string item;
    std::istringstream ss(val);
    while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
    if (out.empty()) throw ConfigError("bad value for '" + key + "': '" + val + "'");
    return out;
}

// Replicate the final row out to t_target rows (identity when equal).
Matrix pad_rows(const Matrix& f, int t_target) {
    if (f.rows == t_target) return f;
    if (f.rows > t_target) throw ShapeError("pad_rows: target shorter than input");
    Matrix out(t_target, f.cols);
    std::copy(f.v.begin(), f.v.end(), out.v.begin());
    for (int t = f.rows; t < t_target; ++t)
        for (int c = 0; c < f.cols; ++c) out(t, c) = f(f.rows - 1, c);
    return out;
}

Mask pad_mask(int valid, int t_target) {
    Mask m(static_cast<size_t>(t_target), 0);
    std::fill(m.begin(), m.begin() + valid, 1);
    return m;
}

std::vector<int> pad_labels(const std::vector<int>& y, int t_target) {
    std::vector<int> out(static_cast<size_t>(t_target), 0);
    std::copy(y.begin(), y.end(), out.begin());
    return out;
}

std::vector<ag::NodePtr> layer_nodes(const std::array<ag::NodePtr, 6>& probs) {
    return std::vector<ag::NodePtr>(probs.begin(), probs.end());
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be > 0");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (w0 < 2) throw ConfigError("train: w0 must be >= 2");
    if (pi0 < 0.0 || pi0 > 1.0) throw ConfigError("train: pi0 must lie in [0, 1]");
    if (eval_every < 0) throw ConfigError("train: eval_every must be >= 0");
    if (calibration_bins < 2) throw ConfigError("train: calibration_bins must be >= 2");
    loss().validate();
    ensemble();  // throws on malformed weights
}

EnsembleConfig TrainConfig::ensemble() const {
    return alpha.empty() ? EnsembleConfig::defaults() : EnsembleConfig::from_weights(alpha);
}

WindowDistribution TrainConfig::window_distribution() const { return build_distribution(w0, pi0); }

LossConfig TrainConfig::loss() const {
    LossConfig lc;
    lc.lambda_tr = lambda_tr;
    lc.eps_max = eps_max;
    lc.prob_floor = prob_floor;
    return lc;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path + ": cannot open file");
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(path + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw FormatError(path + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        if (kv.count(key))
            throw FormatError(path + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                              "'");
        kv[key] = val;
    }
    return kv;
}

std::map<std::string, std::string> parse_kv_line(const std::string& setting) {
    const auto eq = setting.find('=');
    if (eq == std::string::npos)
        throw ConfigError("expected 'key=value', got '" + setting + "'");
    const std::string key = trim(setting.substr(0, eq));
    const std::string val = trim(setting.substr(eq + 1));
    if (key.empty() || val.empty())
        throw ConfigError("expected 'key=value', got '" + setting + "'");
    return {{key, val}};
}

void apply_settings(const std::map<std::string, std::string>& kv, ModelConfig& mc, TrainConfig& tc,
                    SyntheticSpec& sp) {
    for (const auto& [key, val] : kv) {
        if (key == "model.enc_widths") {
            const auto xs = to_int_list(key, val);
            if (xs.size() != 7)
                throw ConfigError("bad value for '" + key + "': want 7 comma-separated widths");
            std::copy(xs.begin(), xs.end(), mc.enc_widths.begin());
        } else if (key == "model.dec_width") {
            mc.dec_width = to_int(key, val);
        } else if (key == "model.tpp_windows") {
            mc.tpp_windows = to_int_list(key, val);
        } else if (key == "model.mlp_hidden") {
            mc.mlp_hidden = to_int(key, val);
        } else if (key == "train.learning_rate") {
            tc.learning_rate = to_double(key, val);
        } else if (key == "train.weight_decay") {
            tc.weight_decay = to_double(key, val);
        } else if (key == "train.decoupled_decay") {
            tc.decoupled_decay = to_bool(key, val);
        } else if (key == "train.batch_size") {
            tc.batch_size = to_int(key, val);
        } else if (key == "train.epochs") {
            tc.epochs = to_int(key, val);
        } else if (key == "train.w0") {
            tc.w0 = to_int(key, val);
        } else if (key == "train.pi0") {
            tc.pi0 = to_double(key, val);
        } else if (key == "train.lambda_tr") {
            tc.lambda_tr = to_double(key, val);
        } else if (key == "train.eps_max") {
            tc.eps_max = to_double(key, val);
        } else if (key == "train.prob_floor") {
            tc.prob_floor = to_double(key, val);
        } else if (key == "train.seed") {
            tc.seed = to_u64(key, val);
        } else if (key == "train.eval_every") {
            tc.eval_every = to_int(key, val);
        } else if (key == "train.alpha") {
            tc.alpha = to_double_list(key, val);
        } else if (key == "train.test_augment") {
            tc.test_augment = to_bool(key, val);
        } else if (key == "train.calibration_bins") {
            tc.calibration_bins = to_int(key, val);
        } else if (key == "synth.num_videos") {
            sp.num_videos = to_int(key, val);
        } else if (key == "synth.num_classes") {
            sp.num_classes = to_int(key, val);
        } else if (key == "synth.num_activities") {
            sp.num_activities = to_int(key, val);
        } else if (key == "synth.d") {
            sp.d = to_int(key, val);
        } else if (key == "synth.t_min") {
            sp.t_min = to_int(key, val);
        } else if (key == "synth.t_max") {
            sp.t_max = to_int(key, val);
        } else if (key == "synth.actions_min") {
            sp.actions_min = to_int(key, val);
        } else if (key == "synth.actions_max") {
            sp.actions_max = to_int(key, val);
        } else if (key == "synth.noise") {
            sp.noise_scale = to_double(key, val);
        } else if (key == "synth.seed") {
            sp.seed = to_u64(key, val);
        } else {
            throw ConfigError("unknown key '" + key + "'");
        }
    }
}

AdamState::AdamState(const std::vector<ag::NodePtr>& params) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
        m.emplace_back(p->value.rows, p->value.cols);
        v.emplace_back(p->value.rows, p->value.cols);
    }
}

bool adam_step(const std::vector<ag::NodePtr>& params, AdamState& state, double lr,
               double weight_decay, bool decoupled) {
    if (params.size() != state.m.size())
        throw ShapeError("adam_step: optimizer state built for a different parameter set");
    for (const auto& p : params) {
        p->ensure_grad();
        for (double g : p->grad.v)
            if (!std::isfinite(g)) {
                ++state.skipped;
                return false;
            }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        for (size_t j = 0; j < p.value.v.size(); ++j) {
            const double w_old = p.value.v[j];
            double g = p.grad.v[j];
            if (!decoupled) g += weight_decay * w_old;
            double& m = state.m[i].v[j];
            double& v = state.v[i].v[j];
            m = state.beta1 * m + (1.0 - state.beta1) * g;
            v = state.beta2 * v + (1.0 - state.beta2) * g * g;
            p.value.v[j] -= lr * (m / bc1) / (std::sqrt(v / bc2) + state.eps);
            if (decoupled) p.value.v[j] -= lr * weight_decay * w_old;
        }
    }
    return true;
}

EpochStats train_epoch(ModelParams& params, const std::vector<VideoRecord>& videos,
                       const TrainConfig& cfg, AdamState& adam, std::mt19937_64& rng) {
    cfg.validate();
    if (videos.empty()) throw ValidationError("train_epoch: no videos");
    const auto ens_cfg = cfg.ensemble();
    const auto dist = cfg.window_distribution();
    const auto loss_cfg = cfg.loss();
    const auto pvec = params.parameters();

    std::vector<size_t> order(videos.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    EpochStats stats;
    const long long skipped_before = adam.skipped;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
        const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
        const int b = static_cast<int>(stop - start);

        std::vector<PooledSample> pooled;
        pooled.reserve(static_cast<size_t>(b));
        int t_batch = 0;
        for (size_t k = start; k < stop; ++k) {
            const auto& vid = videos[order[k]];
            const int w = sample_window(dist, rng);
            pooled.push_back(pool_features(vid.features, vid.frame_labels, w));
            t_batch = std::max(t_batch, padded_length(pooled.back().features.rows));
        }

        std::vector<Matrix> feats;
        std::vector<Mask> masks;
        std::vector<std::vector<int>> labels;
        for (const auto& ps : pooled) {
            feats.push_back(pad_rows(ps.features, t_batch));
            masks.push_back(pad_mask(ps.features.rows, t_batch));
            labels.push_back(pad_labels(ps.labels, t_batch));
        }

        auto fwd = forward_batch(params, feats, masks, /*training=*/true);

        ag::NodePtr total;
        double ce = 0.0, tr = 0.0, al = 0.0, tot = 0.0;
        for (int v = 0; v < b; ++v) {
            auto ens = c2f_ensemble(layer_nodes(fwd.probs[static_cast<size_t>(v)]), ens_cfg, t_batch);
            auto jl = joint_loss(ens, labels[static_cast<size_t>(v)], masks[static_cast<size_t>(v)],
                                 loss_cfg);
            ce += ag::scalar_value(jl.ce);
            tr += ag::scalar_value(jl.tr);
            al += ag::scalar_value(jl.al);
            tot += ag::scalar_value(jl.total);
            total = total ? ag::add(total, jl.total) : jl.total;
        }
        total = ag::affine(total, 1.0 / b, 0.0);

        ag::zero_grad(pvec);
        ag::backward(total);
        adam_step(pvec, adam, cfg.learning_rate, cfg.weight_decay, cfg.decoupled_decay);

        stats.ce += ce / b;
        stats.tr += tr / b;
        stats.al += al / b;
        stats.total += tot / b;
        ++batches;
    }
    stats.ce /= batches;
    stats.tr /= batches;
    stats.al /= batches;
    stats.total /= batches;
    stats.skipped_steps = adam.skipped - skipped_before;
    return stats;
}

std::vector<EpochStats> train(ModelParams& params, const std::vector<VideoRecord>& videos,
                              const TrainConfig& cfg, const EpochLog& log) {
    cfg.validate();
    AdamState adam(params.parameters());
    std::mt19937_64 rng(cfg.seed + 0x9e3779b97f4a7c15ULL);
    std::vector<EpochStats> history;
    history.reserve(static_cast<size_t>(cfg.epochs));
    for (int e = 0; e < cfg.epochs; ++e) {
        history.push_back(train_epoch(params, videos, cfg, adam, rng));
        if (log) log(e, history.back());
    }
    return history;
}

Matrix infer_probs(ModelParams& params, const Matrix& features, const TrainConfig& cfg,
                   const EnsembleConfig& ens) {
    ag::NoGradGuard ng;
    auto infer = [&](const Matrix& pooled) {
        Padded pd = pad_to_multiple(pooled);
        auto fwd = forward_batch(params, {pd.features}, {pd.mask}, /*training=*/false);
        std::vector<Matrix> layers;
        layers.reserve(6);
        for (const auto& p : fwd.probs[0]) layers.push_back(p->value);
        Matrix e = c2f_ensemble(layers, ens, pd.features.rows);
        Matrix valid(pooled.rows, e.cols);
        std::copy(e.v.begin(), e.v.begin() + valid.size(), valid.v.begin());
        return valid;
    };
    if (!cfg.test_augment)
        return ag::upsample_forward(infer(pool_features_only(features, cfg.w0)), features.rows);
    return test_time_aggregate(infer, features, cfg.window_distribution(), features.rows);
}

EvalReport evaluate(ModelParams& params, const std::vector<VideoRecord>& videos,
                    const TrainConfig& cfg, const EnsembleConfig& ens) {
    cfg.validate();
    if (videos.empty()) throw ValidationError("evaluate: no videos");
    EvalReport rep;
    std::vector<double> confidences;
    std::vector<bool> correct;
    for (const auto& vid : videos) {
        Matrix p = infer_probs(params, vid.features, cfg, ens);
        VideoScores vs;
        vs.id = vid.id;
        vs.prediction = predict_labels(p);
        const auto& pred = vs.prediction.labels;
        vs.mof = mof(pred, vid.frame_labels);
        vs.edit = edit_score(pred, vid.frame_labels);
        vs.f1_10 = f1_at(pred, vid.frame_labels, 0.10).f1;
        vs.f1_25 = f1_at(pred, vid.frame_labels, 0.25).f1;
        vs.f1_50 = f1_at(pred, vid.frame_labels, 0.50).f1;
        rep.mof += vs.mof;
        rep.edit += vs.edit;
        rep.f1_10 += vs.f1_10;
        rep.f1_25 += vs.f1_25;
        rep.f1_50 += vs.f1_50;
        for (size_t t = 0; t < pred.size(); ++t) {
            confidences.push_back(vs.prediction.confidence[t]);
            correct.push_back(pred[t] == vid.frame_labels[t]);
        }
        for (double h : wrong_prediction_entropy(p, pred, vid.frame_labels))
            rep.wrong_entropies.push_back(h);
        rep.videos.push_back(std::move(vs));
    }
    const double n = static_cast<double>(videos.size());
    rep.mof /= n;
    rep.edit /= n;
    rep.f1_10 /= n;
    rep.f1_25 /= n;
    rep.f1_50 /= n;
    rep.calibration = calibration_curve(confidences, correct, cfg.calibration_bins);
    rep.wrong_count = static_cast<long long>(rep.wrong_entropies.size());
    rep.wrong_entropy_mean = rep.wrong_count ? mean_of(rep.wrong_entropies) : 0.0;
    return rep;
}

std::vector<EvalReport> evaluate_per_layer(ModelParams& params,
                                           const std::vector<VideoRecord>& videos,
                                           const TrainConfig& cfg) {
    std::vector<EvalReport> out;
    out.reserve(6);
    for (int i = 0; i < 6; ++i)
        out.push_back(evaluate(params, videos, cfg, EnsembleConfig::one_hot(i)));
    return out;
}

KFoldResult run_kfold(const Dataset& ds, int k, const ModelConfig& mc, const TrainConfig& cfg,
                      const FoldLog& log) {
    std::vector<std::string> ids;
    ids.reserve(ds.videos.size());
    for (const auto& v : ds.videos) ids.push_back(v.id);
    std::map<std::string, const VideoRecord*> by_id;
    for (const auto& v : ds.videos) by_id[v.id] = &v;

    KFoldResult result;
    const auto folds = kfold_splits(ids, k, cfg.seed);
    for (size_t f = 0; f < folds.size(); ++f) {
        std::vector<VideoRecord> train_vids, test_vids;
        for (const auto& id : folds[f].train) train_vids.push_back(*by_id.at(id));
        for (const auto& id : folds[f].test) test_vids.push_back(*by_id.at(id));

        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = cfg.seed + f;  // distinct init and schedule per fold
        ModelParams params(mc, fold_cfg.seed);
        const int fold_idx = static_cast<int>(f);
        train(params, train_vids, fold_cfg,
              log ? EpochLog([&, fold_idx](int e, const EpochStats& s) { log(fold_idx, e, s); })
                  : EpochLog{});

        FoldResult fr;
        fr.fold = folds[f];
        fr.report = evaluate(params, test_vids, fold_cfg, fold_cfg.ensemble());
        result.mof += fr.report.mof;
        result.edit += fr.report.edit;
        result.f1_10 += fr.report.f1_10;
        result.f1_25 += fr.report.f1_25;
        result.f1_50 += fr.report.f1_50;
        result.folds.push_back(std::move(fr));
    }
    const double n = static_cast<double>(folds.size());
    result.mof /= n;
    result.edit /= n;
    result.f1_10 /= n;
    result.f1_25 /= n;
    result.f1_50 /= n;
    return result;
}

std::vector<RecognitionSample> recognition_samples(const std::vector<VideoRecord>& videos) {
    std::vector<RecognitionSample> out;
    out.reserve(videos.size());
    for (const auto& v : videos) out.push_back({v.features, v.activity});
    return out;
}

std::vector<double> train_recognition(ModelParams& params,
                                      const std::vector<RecognitionSample>& samples,
                                      const TrainConfig& cfg, const EpochLog& log) {
    cfg.validate();
    if (samples.empty()) throw ValidationError("train_recognition: no samples");
    for (const auto& s : samples)
        if (s.activity < 0 || s.activity >= params.cfg.num_activities)
            throw ValidationError("train_recognition: activity out of range");
    const auto ens_cfg = cfg.ensemble();
    const auto dist = cfg.window_distribution();
    const auto loss_cfg = cfg.loss();
    const auto pvec = params.parameters();
    AdamState adam(pvec);
    std::mt19937_64 rng(cfg.seed + 0x9e3779b97f4a7c15ULL);

    std::vector<double> history;
    history.reserve(static_cast<size_t>(cfg.epochs));
    for (int e = 0; e < cfg.epochs; ++e) {
        std::vector<size_t> order(samples.size());
        std::iota(order.begin(), order.end(), size_t{0});
        std::shuffle(order.begin(), order.end(), rng);

        std::vector<double> batch_losses;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            const int b = static_cast<int>(stop - start);

            std::vector<Matrix> feats;
            std::vector<Mask> masks;
            std::vector<int> acts;
            int t_batch = 0;
            std::vector<Matrix> pooled;
            for (size_t k = start; k < stop; ++k) {
                const auto& s = samples[order[k]];
                pooled.push_back(pool_features_only(s.features, sample_window(dist, rng)));
                acts.push_back(s.activity);
                t_batch = std::max(t_batch, padded_length(pooled.back().rows));
            }
            for (const auto& pf : pooled) {
                feats.push_back(pad_rows(pf, t_batch));
                masks.push_back(pad_mask(pf.rows, t_batch));
            }

            auto fwd = forward_batch(params, feats, masks, /*training=*/true);
            ag::NodePtr total;
            for (int v = 0; v < b; ++v) {
                auto ens = c2f_ensemble(layer_nodes(fwd.probs[static_cast<size_t>(v)]), ens_cfg, t_batch);
                auto pv = recognition_forward(params, ens, masks[static_cast<size_t>(v)]);
                auto loss = recognition_loss(pv, acts[static_cast<size_t>(v)], loss_cfg);
                total = total ? ag::add(total, loss) : loss;
            }
            total = ag::affine(total, 1.0 / b, 0.0);
            batch_losses.push_back(ag::scalar_value(total));

            ag::zero_grad(pvec);
            ag::backward(total);
            adam_step(pvec, adam, cfg.learning_rate, cfg.weight_decay, cfg.decoupled_decay);
        }
        history.push_back(mean_of(batch_losses));
        if (log) {
            EpochStats s;
            s.total = history.back();
            log(e, s);
        }
    }
    return history;
}

Matrix activity_probs(ModelParams& params, const Matrix& features, const TrainConfig& cfg) {
    ag::NoGradGuard ng;
    Padded pd = pad_to_multiple(pool_features_only(features, cfg.w0));
    auto fwd = forward_batch(params, {pd.features}, {pd.mask}, /*training=*/false);
    auto ens = c2f_ensemble(layer_nodes(fwd.probs[0]), cfg.ensemble(), pd.features.rows);
    return recognition_forward(params, ens, pd.mask)->value;
}

int predict_activity(ModelParams& params, const Matrix& features, const TrainConfig& cfg) {
    const Matrix pv = activity_probs(params, features, cfg);
    int best = 0;
    for (int k = 1; k < pv.cols; ++k)
        if (pv(0, k) > pv(0, best)) best = k;
    return best;
}

}  // namespace c2f
