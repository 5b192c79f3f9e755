#include "hrm/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "hrm/metrics.hpp"

namespace hrm {

AdamW::AdamW(double lr, double weight_decay, double beta1, double beta2,
             double eps)
    : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(std::vector<ParamRef>& params) {
  if (m_.empty()) {
    for (const ParamRef& p : params) {
      m_.emplace_back(p.value->rows, p.value->cols);
      v_.emplace_back(p.value->rows, p.value->cols);
    }
  }
  require(m_.size() == params.size(), ErrorCode::Shape,
          "optimizer state does not match parameter list");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Matrix& val = *params[i].value;
    const Matrix& grad = *params[i].grad;
    require(m_[i].same_shape(val) && grad.same_shape(val), ErrorCode::Shape,
            "parameter/gradient shape mismatch for '" + params[i].name + "'");
    const bool decay = !params[i].decay_exempt && wd_ > 0.0;
    for (size_t j = 0; j < val.size(); ++j) {
      double g = grad.v[j];
      m_[i].v[j] = beta1_ * m_[i].v[j] + (1.0 - beta1_) * g;
      v_[i].v[j] = beta2_ * v_[i].v[j] + (1.0 - beta2_) * g * g;
      double mhat = m_[i].v[j] / bc1;
      double vhat = v_[i].v[j] / bc2;
      double update = mhat / (std::sqrt(vhat) + eps_);
      if (decay) update += wd_ * val.v[j];
      val.v[j] -= lr_ * update;
    }
  }
}

bool EarlyStopper::observe(int step, double srcc) {
  if (srcc > best_srcc_) {
    best_srcc_ = srcc;
    best_step_ = step;
    return true;
  }
  return false;
}

PreparedDataset prepare_dataset(const std::vector<UtteranceRecord>& records,
                                const FrameEncoder& encoder,
                                const FeatureConfig& fcfg,
                                const std::string& cache_dir) {
  uint64_t hash = feature_identity_hash(fcfg, encoder);
  PreparedDataset ds;
  ds.records = records;
  ds.bundles.reserve(records.size());
  for (const auto& r : records) {
    std::string cache_path;
    if (!cache_dir.empty()) {
      cache_path = cache_dir + "/" + r.utterance_id + ".feat";
      FeatureBundle cached;
      if (load_bundle(cache_path, hash, cached)) {
        ds.bundles.push_back(std::move(cached));
        continue;
      }
    }
    Waveform wave = load_waveform(r.audio_path);
    require(wave.sample_rate == r.sample_rate, ErrorCode::Validation,
            "'" + r.audio_path + "': container rate " +
                std::to_string(wave.sample_rate) + " disagrees with manifest " +
                std::to_string(r.sample_rate));
    FeatureBundle b = build_bundle(wave, encoder, fcfg);
    if (!cache_path.empty()) save_bundle(b, hash, cache_path);
    ds.bundles.push_back(std::move(b));
  }
  return ds;
}

uint64_t feature_identity_hash(const FeatureConfig& fcfg,
                               const FrameEncoder& encoder) {
  uint64_t h = fcfg.hash();
  auto mix = [&h](uint64_t x) {
    h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  };
  mix(static_cast<uint64_t>(encoder.output_dim()));
  mix(static_cast<uint64_t>(encoder.frame_hop_samples()));
  mix(static_cast<uint64_t>(encoder.receptive_window_samples()));
  return h;
}

namespace {

double dev_system_srcc(const ScoreModel& model, const PreparedDataset& dev) {
  PredictionSet preds = predict(model, dev);
  std::vector<std::string> systems;
  std::vector<double> sp, sy;
  system_aggregate(preds, dev.records, systems, sp, sy);
  return spearman(sp, sy).value;  // degenerate single-system dev reads as 0
}

struct Snapshot {
  std::vector<Matrix> values;
};

Snapshot take_snapshot(ScoreModel& model) {
  Snapshot s;
  for (const ParamRef& p : model.parameters()) s.values.push_back(*p.value);
  return s;
}

void restore_snapshot(ScoreModel& model, const Snapshot& s) {
  auto params = model.parameters();
  require(params.size() == s.values.size(), ErrorCode::Shape,
          "snapshot does not match model");
  for (size_t i = 0; i < params.size(); ++i) *params[i].value = s.values[i];
}

}  // namespace

TrainResult train(const PreparedDataset& train_set,
                  const PreparedDataset& dev_set, const TrainConfig& cfg,
                  uint64_t feature_hash, const std::string& history_csv_path) {
  (void)feature_hash;
  cfg.validate();
  require(!train_set.records.empty(), ErrorCode::Validation, "empty training set");
  require(!dev_set.records.empty(), ErrorCode::Validation, "empty dev set");
  require(train_set.records.size() == train_set.bundles.size() &&
              dev_set.records.size() == dev_set.bundles.size(),
          ErrorCode::Shape, "records/bundles mismatch");
  require(static_cast<size_t>(cfg.batch_size) >= min_batch_size(cfg.loss.name),
          ErrorCode::Config,
          "batch_size below the minimum for loss '" +
              loss_to_string(cfg.loss.name) + "'");

  ScoreModel model(cfg.model, cfg.seed);
  auto params = model.parameters();
  AdamW opt(cfg.learning_rate, cfg.weight_decay);
  EarlyStopper stopper(cfg.patience_steps);
  TrainHistory history;

  std::ofstream hist_out;
  if (!history_csv_path.empty()) {
    hist_out.open(history_csv_path);
    require(hist_out.good(), ErrorCode::Io,
            "cannot write history '" + history_csv_path + "'");
    hist_out << "step,train_loss,dev_sys_srcc,is_best\n";
  }

  const size_t n = train_set.records.size();
  Lcg64 shuffle_rng(cfg.seed ^ 0xb5297a4d8a9c0f1eULL);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  auto reshuffle = [&] {
    for (size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
  };
  reshuffle();
  size_t cursor = 0;
  // Cycles the shuffled order; reshuffles at epoch boundaries. Datasets
  // smaller than one batch wrap around within the batch.
  auto next_index = [&]() -> size_t {
    if (cursor == n) {
      reshuffle();
      cursor = 0;
    }
    return order[cursor++];
  };

  Snapshot best = take_snapshot(model);
  double loss_acc = 0.0;
  int loss_count = 0;
  std::vector<ForwardCache> caches(cfg.batch_size);

  int step = 0;
  while (step < cfg.max_steps) {
    ++step;

    Batch batch;
    batch.preds.resize(cfg.batch_size);
    batch.labels.resize(cfg.batch_size);
    std::vector<size_t> idx(cfg.batch_size);
    for (int i = 0; i < cfg.batch_size; ++i) idx[i] = next_index();

    model.zero_grad();
    for (int i = 0; i < cfg.batch_size; ++i) {
      batch.preds[i] = model.forward(train_set.bundles[idx[i]], caches[i]);
      batch.labels[i] = train_set.records[idx[i]].mos;
    }
    double loss = evaluate_loss(cfg.loss, batch);
    require(std::isfinite(loss), ErrorCode::Divergence,
            "training diverged: non-finite loss at step " + std::to_string(step));
    std::vector<double> dg = loss_gradient(cfg.loss, batch);
    for (int i = 0; i < cfg.batch_size; ++i) {
      model.backward(train_set.bundles[idx[i]], caches[i], dg[i]);
    }
    opt.step(params);
    loss_acc += loss;
    ++loss_count;

    if (step % cfg.validate_every == 0) {
      double srcc = dev_system_srcc(model, dev_set);
      bool is_best = stopper.observe(step, srcc);
      if (is_best) best = take_snapshot(model);

      ValidationPoint pt;
      pt.step = step;
      pt.train_loss = loss_count > 0 ? loss_acc / loss_count : 0.0;
      pt.dev_sys_srcc = srcc;
      pt.is_best = is_best;
      history.points.push_back(pt);
      loss_acc = 0.0;
      loss_count = 0;
      if (hist_out.is_open()) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%d\n", pt.step,
                      pt.train_loss, pt.dev_sys_srcc, pt.is_best ? 1 : 0);
        hist_out << buf;
      }
      if (stopper.should_stop(step)) break;
    }
  }

  history.best_step = stopper.best_step();
  history.best_srcc = stopper.best_srcc();
  history.stop_step = step;

  restore_snapshot(model, best);
  TrainResult result;
  result.best_model = std::make_unique<ScoreModel>(std::move(model));
  result.history = std::move(history);
  return result;
}

PredictionSet predict(const ScoreModel& model, const PreparedDataset& dataset) {
  PredictionSet out;
  for (size_t i = 0; i < dataset.records.size(); ++i) {
    double score = model.forward(dataset.bundles[i]);
    out.add(dataset.records[i].utterance_id, score,
            dataset.records[i].system_id);
  }
  return out;
}

PredictionSet predict_clamped(const ScoreModel& model,
                              const PreparedDataset& dataset) {
  PredictionSet out = predict(model, dataset);
  for (auto& [id, score] : out.entries) {
    (void)id;
    score = std::min(5.0, std::max(1.0, score));
  }
  return out;
}

CrossValidationResult cross_validate(const std::vector<UtteranceRecord>& records,
                                     int k, const TrainConfig& cfg,
                                     const FrameEncoder& encoder,
                                     const FeatureConfig& fcfg,
                                     const std::string& cache_dir) {
  require(k >= 2, ErrorCode::Config, "k must be >= 2");
  for (const auto& r : records) {
    require(r.fold >= 0 && r.fold < k, ErrorCode::Config,
            "record '" + r.utterance_id + "' has no fold in [0," +
                std::to_string(k) + ")");
  }

  PreparedDataset all = prepare_dataset(records, encoder, fcfg, cache_dir);
  uint64_t feature_hash = feature_identity_hash(fcfg, encoder);

  CrossValidationResult result;
  for (int fold = 0; fold < k; ++fold) {
    PreparedDataset train_ds, dev_ds;
    for (size_t i = 0; i < all.records.size(); ++i) {
      auto& dst = all.records[i].fold == fold ? dev_ds : train_ds;
      dst.records.push_back(all.records[i]);
      dst.bundles.push_back(all.bundles[i]);
    }
    require(!dev_ds.records.empty(), ErrorCode::Validation,
            "fold " + std::to_string(fold) + " is empty");

    TrainResult tr = train(train_ds, dev_ds, cfg, feature_hash);
    PredictionSet held_out = predict(*tr.best_model, dev_ds);
    for (const auto& [id, score] : held_out.entries) {
      result.pooled_dev_predictions.add(id, score, held_out.system_of.at(id));
    }
    result.fold_dev_srcc.push_back(tr.history.best_srcc);
    result.fold_histories.push_back(std::move(tr.history));
    result.fold_models.push_back(std::move(tr.best_model));
  }

  result.best_fold = 0;
  for (int f = 1; f < k; ++f) {
    if (result.fold_dev_srcc[f] > result.fold_dev_srcc[result.best_fold]) {
      result.best_fold = f;
    }
  }
  return result;
}

}  // namespace hrm
