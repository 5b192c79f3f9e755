#ifndef HRM_TRAINING_HPP
#define HRM_TRAINING_HPP

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hrm/data.hpp"
#include "hrm/features.hpp"
#include "hrm/losses.hpp"
#include "hrm/model.hpp"

namespace hrm {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 8;
  int patience_steps = 2000;
  int validate_every = 100;
  double weight_decay = 1e-2;
  uint64_t seed = 0;
  int max_steps = 50000;
  LossConfig loss;
  ModelConfig model;

  void validate() const {
    require(learning_rate > 0, ErrorCode::Config, "learning_rate must be > 0");
    require(batch_size >= 1, ErrorCode::Config, "batch_size must be >= 1");
    require(validate_every >= 1, ErrorCode::Config, "validate_every must be >= 1");
    require(patience_steps >= validate_every, ErrorCode::Config,
            "patience_steps must be >= validate_every");
  }
};

struct ValidationPoint {
  int step = 0;
  double train_loss = 0.0;
  double dev_sys_srcc = 0.0;
  bool is_best = false;
};

struct TrainHistory {
  std::vector<ValidationPoint> points;
  int best_step = 0;
  double best_srcc = 0.0;
  int stop_step = 0;
};

// AdamW: decoupled weight decay, bias-corrected moments. Decay skips
// parameters marked decay_exempt (biases, rate-embedding table).
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);

  void step(std::vector<ParamRef>& params);
  int64_t steps_taken() const { return t_; }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Matrix> m_, v_;  // per-param moment buffers
};

// Early-stopping bookkeeping, isolated so the rule is testable with
// injected SRCC sequences: feed (step, srcc) pairs in order; stop once
// step - best_step >= patience.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when this point is a new best (strictly greater).
  bool observe(int step, double srcc);
  bool should_stop(int step) const { return step - best_step_ >= patience_; }
  int best_step() const { return best_step_; }
  double best_srcc() const { return best_srcc_; }

 private:
  int patience_;
  int best_step_ = 0;
  double best_srcc_ = -2.0;  // below any valid correlation
};

// Extracted features for a set of records, kept in training order.
struct PreparedDataset {
  std::vector<UtteranceRecord> records;
  std::vector<FeatureBundle> bundles;
};

PreparedDataset prepare_dataset(const std::vector<UtteranceRecord>& records,
                                const FrameEncoder& encoder,
                                const FeatureConfig& fcfg,
                                const std::string& cache_dir = "");

// Identifies the feature pipeline (spectral config + encoder geometry);
// stored in checkpoints and feature caches so they refuse to mix.
uint64_t feature_identity_hash(const FeatureConfig& fcfg,
                               const FrameEncoder& encoder);

struct TrainResult {
  std::unique_ptr<ScoreModel> best_model;
  TrainHistory history;
};

// Mini-batch training with periodic dev validation on system-level SRCC.
// Returns the best checkpoint, not the last. Aborts with a Divergence
// error naming the step if the loss goes non-finite.
TrainResult train(const PreparedDataset& train_set,
                  const PreparedDataset& dev_set, const TrainConfig& cfg,
                  uint64_t feature_hash,
                  const std::string& history_csv_path = "");

PredictionSet predict(const ScoreModel& model,
                      const PreparedDataset& dataset);

// Prediction with evaluation-time clamping to [1, 5].
PredictionSet predict_clamped(const ScoreModel& model,
                              const PreparedDataset& dataset);

struct CrossValidationResult {
  std::vector<std::unique_ptr<ScoreModel>> fold_models;
  std::vector<TrainHistory> fold_histories;
  std::vector<double> fold_dev_srcc;
  PredictionSet pooled_dev_predictions;
  int best_fold = 0;  // argmax fold dev SRCC, ties toward lower index
};

CrossValidationResult cross_validate(const std::vector<UtteranceRecord>& records,
                                     int k, const TrainConfig& cfg,
                                     const FrameEncoder& encoder,
                                     const FeatureConfig& fcfg,
                                     const std::string& cache_dir = "");

}  // namespace hrm

#endif  // HRM_TRAINING_HPP
