#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "c2f/augment.hpp"
#include "c2f/data.hpp"
#include "c2f/ensemble.hpp"
#include "c2f/losses.hpp"
#include "c2f/metrics.hpp"
#include "c2f/model.hpp"

namespace c2f {

struct TrainConfig {
    double learning_rate = 3e-4;
    double weight_decay = 0.0;
    bool decoupled_decay = false;  // apply decay to weights directly instead of through the moments
    int batch_size = 5;
    int epochs = 600;
    int w0 = 10;
    double pi0 = 0.5;
    double lambda_tr = 0.15;
    double eps_max = 4.0;
    double prob_floor = 1e-8;
    std::uint64_t seed = 0;
    int eval_every = 0;                          // 0 = final evaluation only
    std::vector<double> alpha;                   // ensemble weights; empty = library defaults
    bool test_augment = true;
    int calibration_bins = 10;

    void validate() const;
    EnsembleConfig ensemble() const;
    WindowDistribution window_distribution() const;
    LossConfig loss() const;
};

// Plain "key = value" settings file; '#' starts a comment. Keys are grouped
// as model.*, train.*, synth.*; anything else is rejected.
std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_line(const std::string& line);  // one "key=value"
void apply_settings(const std::map<std::string, std::string>& kv, ModelConfig& mc, TrainConfig& tc,
                    SyntheticSpec& sp);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long step = 0;     // applied updates only
    long long skipped = 0;  // batches dropped because a gradient went non-finite
    std::vector<Matrix> m, v;

    explicit AdamState(const std::vector<ag::NodePtr>& params);
};

// One optimizer update from the gradients currently stored on params.
// Returns false (and bumps state.skipped) if any gradient is non-finite.
bool adam_step(const std::vector<ag::NodePtr>& params, AdamState& state, double lr,
               double weight_decay, bool decoupled);

struct EpochStats {
    double total = 0.0, ce = 0.0, tr = 0.0, al = 0.0;  // means over batches
    long long skipped_steps = 0;
};

EpochStats train_epoch(ModelParams& params, const std::vector<VideoRecord>& videos,
                       const TrainConfig& cfg, AdamState& adam, std::mt19937_64& rng);

using EpochLog = std::function<void(int epoch, const EpochStats&)>;

// Runs cfg.epochs epochs of train_epoch with a seeded rng and fresh AdamState.
std::vector<EpochStats> train(ModelParams& params, const std::vector<VideoRecord>& videos,
                              const TrainConfig& cfg, const EpochLog& log = {});

// Ensemble probabilities at the video's native resolution. Applies the
// test-time window expectation unless cfg.test_augment is off, in which case
// this is exactly single-resolution inference at w0.
Matrix infer_probs(ModelParams& params, const Matrix& features, const TrainConfig& cfg,
                   const EnsembleConfig& ens);

struct VideoScores {
    std::string id;
    double mof = 0.0, edit = 0.0, f1_10 = 0.0, f1_25 = 0.0, f1_50 = 0.0;
    Prediction prediction;
};

struct EvalReport {
    // Unweighted means over videos.
    double mof = 0.0, edit = 0.0, f1_10 = 0.0, f1_25 = 0.0, f1_50 = 0.0;
    std::vector<VideoScores> videos;
    std::vector<CalibrationBin> calibration;  // pooled over every frame
    std::vector<double> wrong_entropies;      // entropy of each wrongly predicted frame
    double wrong_entropy_mean = 0.0;
    long long wrong_count = 0;
};

EvalReport evaluate(ModelParams& params, const std::vector<VideoRecord>& videos,
                    const TrainConfig& cfg, const EnsembleConfig& ens);

// One report per decoder layer, scored with the matching one-hot ensemble.
std::vector<EvalReport> evaluate_per_layer(ModelParams& params,
                                           const std::vector<VideoRecord>& videos,
                                           const TrainConfig& cfg);

struct FoldResult {
    Fold fold;
    EvalReport report;
};

struct KFoldResult {
    std::vector<FoldResult> folds;
    double mof = 0.0, edit = 0.0, f1_10 = 0.0, f1_25 = 0.0, f1_50 = 0.0;  // means over folds
};

using FoldLog = std::function<void(int fold, int epoch, const EpochStats&)>;

KFoldResult run_kfold(const Dataset& ds, int k, const ModelConfig& mc, const TrainConfig& cfg,
                      const FoldLog& log = {});

// Video-level recognition. Samples carry no frame labels by construction.
struct RecognitionSample {
    Matrix features;
    int activity = 0;
};

std::vector<RecognitionSample> recognition_samples(const std::vector<VideoRecord>& videos);

// Trains the whole backbone plus MLP head against the video-level loss.
// Returns the mean loss per epoch.
std::vector<double> train_recognition(ModelParams& params,
                                      const std::vector<RecognitionSample>& samples,
                                      const TrainConfig& cfg, const EpochLog& log = {});

Matrix activity_probs(ModelParams& params, const Matrix& features, const TrainConfig& cfg);
int predict_activity(ModelParams& params, const Matrix& features, const TrainConfig& cfg);

}  // namespace c2f
