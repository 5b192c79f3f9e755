#include "highratemos.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "hrm/config.hpp"
#include "hrm/data.hpp"
#include "hrm/ensemble.hpp"
#include "hrm/metrics.hpp"
#include "hrm/training.hpp"

namespace {

thread_local std::string g_last_error;

int code_of(const hrm::Error& e) {
  switch (e.code()) {
    case hrm::ErrorCode::Io: return HRM_ERR_IO;
    case hrm::ErrorCode::Schema: return HRM_ERR_SCHEMA;
    case hrm::ErrorCode::Validation: return HRM_ERR_VALIDATION;
    case hrm::ErrorCode::Config: return HRM_ERR_CONFIG;
    case hrm::ErrorCode::UnsupportedFormat: return HRM_ERR_UNSUPPORTED_FORMAT;
    case hrm::ErrorCode::Unavailable: return HRM_ERR_UNAVAILABLE;
    case hrm::ErrorCode::Shape: return HRM_ERR_SHAPE;
    case hrm::ErrorCode::Divergence: return HRM_ERR_DIVERGENCE;
    default: return HRM_ERR_INTERNAL;
  }
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return HRM_OK;
  } catch (const hrm::Error& e) {
    g_last_error = e.what();
    return code_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HRM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return HRM_ERR_INTERNAL;
  }
}

int fill_buffer(const std::string& text, char* buf, size_t buflen,
                size_t* needed) {
  if (needed != nullptr) *needed = text.size() + 1;
  if (buf == nullptr || buflen == 0) return HRM_OK;
  size_t n = std::min(buflen - 1, text.size());
  std::memcpy(buf, text.data(), n);
  buf[n] = '\0';
  if (buflen <= text.size()) {
    g_last_error = "buffer too small";
    return HRM_ERR_VALIDATION;
  }
  return HRM_OK;
}

void require_arg(const void* p, const char* name) {
  if (p == nullptr) {
    throw hrm::Error(hrm::ErrorCode::Validation,
                     std::string(name) + " must not be NULL");
  }
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

// Splits a manifest into train (fold != 0) and dev (fold == 0),
// assigning folds first if the manifest carries none.
void train_dev_split(std::vector<hrm::UtteranceRecord> records, int k,
                     uint64_t seed, std::vector<hrm::UtteranceRecord>& train,
                     std::vector<hrm::UtteranceRecord>& dev) {
  bool has_folds = true;
  for (const auto& r : records) {
    if (r.fold < 0) {
      has_folds = false;
      break;
    }
  }
  if (!has_folds) hrm::kfold_split(records, k, seed);
  for (const auto& r : records) {
    (r.fold == 0 ? dev : train).push_back(r);
  }
  hrm::require(!train.empty() && !dev.empty(), hrm::ErrorCode::Validation,
               "train/dev split left one side empty");
}

}  // namespace

struct hrm_config {
  hrm::RunConfig cfg;
};

extern "C" {

const char* hrm_last_error(void) { return g_last_error.c_str(); }

int hrm_config_new(hrm_config** out) {
  return guarded([&] {
    require_arg(out, "out");
    *out = new hrm_config{hrm::RunConfig::defaults()};
  });
}

int hrm_config_load(const char* path, hrm_config** out) {
  return guarded([&] {
    require_arg(path, "path");
    require_arg(out, "out");
    *out = new hrm_config{hrm::RunConfig::from_file(path)};
  });
}

int hrm_config_set(hrm_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(key, "key");
    require_arg(value, "value");
    cfg->cfg.set(key, value);
  });
}

int hrm_config_text(const hrm_config* cfg, char* buf, size_t buflen,
                    size_t* needed) {
  int rc = guarded([&] { require_arg(cfg, "cfg"); });
  if (rc != HRM_OK) return rc;
  return fill_buffer(cfg->cfg.to_text(), buf, buflen, needed);
}

int hrm_config_write(const hrm_config* cfg, const char* path) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(path, "path");
    cfg->cfg.write(path);
  });
}

int hrm_config_ablate(hrm_config* cfg, const char* component) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(component, "component");
    hrm::RunConfig copy = cfg->cfg;
    hrm::ablate_component(copy, component);
    cfg->cfg = copy;
  });
}

void hrm_config_free(hrm_config* cfg) { delete cfg; }

int hrm_extract(const hrm_config* cfg, const char* manifest_path,
                const char* cache_dir) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(manifest_path, "manifest_path");
    require_arg(cache_dir, "cache_dir");
    std::filesystem::create_directories(cache_dir);
    auto records = hrm::load_manifest(manifest_path);
    auto encoder = cfg->cfg.make_encoder();
    hrm::prepare_dataset(records, *encoder, cfg->cfg.features, cache_dir);
  });
}

int hrm_train(const hrm_config* cfg, const char* manifest_path,
              const char* out_dir, const char* cache_dir) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(manifest_path, "manifest_path");
    require_arg(out_dir, "out_dir");
    std::filesystem::create_directories(out_dir);
    const hrm::RunConfig& rc = cfg->cfg;

    auto records = hrm::load_manifest(manifest_path);
    std::vector<hrm::UtteranceRecord> train_recs, dev_recs;
    train_dev_split(records, rc.cv_folds, rc.train.seed, train_recs, dev_recs);

    auto encoder = rc.make_encoder();
    std::string cache = cache_dir != nullptr ? cache_dir : "";
    auto train_ds = hrm::prepare_dataset(train_recs, *encoder, rc.features, cache);
    auto dev_ds = hrm::prepare_dataset(dev_recs, *encoder, rc.features, cache);
    uint64_t fhash = hrm::feature_identity_hash(rc.features, *encoder);

    rc.write(join(out_dir, "resolved.cfg"));
    hrm::TrainResult result = hrm::train(train_ds, dev_ds, rc.train, fhash,
                                         join(out_dir, "history.csv"));
    result.best_model->save_checkpoint(
        join(out_dir, "best.ckpt"), fhash,
        static_cast<uint64_t>(result.history.best_step));
  });
}

int hrm_cv(const hrm_config* cfg, const char* manifest_path,
           const char* out_dir, const char* cache_dir) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(manifest_path, "manifest_path");
    require_arg(out_dir, "out_dir");
    std::filesystem::create_directories(out_dir);
    const hrm::RunConfig& rc = cfg->cfg;

    auto records = hrm::load_manifest(manifest_path);
    bool has_folds = !records.empty();
    for (const auto& r : records) {
      if (r.fold < 0 || r.fold >= rc.cv_folds) has_folds = false;
    }
    if (!has_folds) {
      hrm::kfold_split(records, rc.cv_folds, rc.train.seed);
    }

    auto encoder = rc.make_encoder();
    std::string cache = cache_dir != nullptr ? cache_dir : "";
    uint64_t fhash = hrm::feature_identity_hash(rc.features, *encoder);

    rc.write(join(out_dir, "resolved.cfg"));
    hrm::CrossValidationResult cv = hrm::cross_validate(
        records, rc.cv_folds, rc.train, *encoder, rc.features, cache);

    for (int f = 0; f < rc.cv_folds; ++f) {
      cv.fold_models[f]->save_checkpoint(
          join(out_dir, "fold" + std::to_string(f) + ".ckpt"), fhash,
          static_cast<uint64_t>(cv.fold_histories[f].best_step));
      std::ofstream hist(join(out_dir, "fold" + std::to_string(f) + "_history.csv"));
      hist << "step,train_loss,dev_sys_srcc,is_best\n";
      char buf[128];
      for (const auto& pt : cv.fold_histories[f].points) {
        std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%d\n", pt.step,
                      pt.train_loss, pt.dev_sys_srcc, pt.is_best ? 1 : 0);
        hist << buf;
      }
    }
    hrm::write_predictions(cv.pooled_dev_predictions, join(out_dir, "pooled.tsv"));

    std::ofstream summary(join(out_dir, "cv_summary.csv"));
    summary << "fold,dev_sys_srcc,is_best\n";
    char buf[96];
    for (int f = 0; f < rc.cv_folds; ++f) {
      std::snprintf(buf, sizeof(buf), "%d,%.9f,%d\n", f, cv.fold_dev_srcc[f],
                    f == cv.best_fold ? 1 : 0);
      summary << buf;
    }

    hrm::MetricReport rep = hrm::full_report(cv.pooled_dev_predictions, records);
    std::ofstream report(join(out_dir, "pooled_report.txt"));
    report << hrm::format_report(rep);
  });
}

int hrm_predict(const hrm_config* cfg, const char* checkpoint_path,
                const char* manifest_path, const char* out_file,
                const char* cache_dir) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(checkpoint_path, "checkpoint_path");
    require_arg(manifest_path, "manifest_path");
    require_arg(out_file, "out_file");
    const hrm::RunConfig& rc = cfg->cfg;

    uint64_t ckpt_hash = 0;
    hrm::ScoreModel model =
        hrm::ScoreModel::load_checkpoint(checkpoint_path, &ckpt_hash);

    auto encoder = rc.make_encoder();
    uint64_t fhash = hrm::feature_identity_hash(rc.features, *encoder);
    hrm::require(ckpt_hash == fhash, hrm::ErrorCode::Config,
                 "checkpoint feature hash does not match the configured "
                 "feature pipeline; refusing to predict");

    auto records = hrm::load_manifest(manifest_path);
    std::string cache = cache_dir != nullptr ? cache_dir : "";
    auto ds = hrm::prepare_dataset(records, *encoder, rc.features, cache);
    hrm::write_predictions(hrm::predict(model, ds), out_file);
  });
}

int hrm_evaluate(const char* pred_file, const char* manifest_path, char* buf,
                 size_t buflen, size_t* needed) {
  std::string text;
  int rc = guarded([&] {
    require_arg(pred_file, "pred_file");
    require_arg(manifest_path, "manifest_path");
    auto preds = hrm::read_predictions(pred_file);
    auto records = hrm::load_manifest(manifest_path);
    text = hrm::format_report(hrm::full_report(preds, records));
  });
  if (rc != HRM_OK) return rc;
  return fill_buffer(text, buf, buflen, needed);
}

int hrm_ensemble(const char* spec_name, const hrm_ensemble_member* m1,
                 const hrm_ensemble_member* m2, const hrm_ensemble_member* m3,
                 const char* out_file) {
  return guarded([&] {
    require_arg(spec_name, "spec_name");
    require_arg(out_file, "out_file");

    auto to_variant = [](const hrm_ensemble_member* m) {
      hrm::VariantPredictions v;
      if (m == nullptr) return v;
      if (m->fold_files != nullptr) {
        for (int i = 0; i < m->n_folds; ++i) {
          v.fold_sets.push_back(hrm::read_predictions(m->fold_files[i]));
          if (m->fold_srcc != nullptr) v.fold_dev_srcc.push_back(m->fold_srcc[i]);
        }
      }
      if (m->std_file != nullptr) {
        v.standard = hrm::read_predictions(m->std_file);
        v.has_standard = true;
      }
      return v;
    };
    hrm::PredictionSet out = hrm::build_ensemble(
        spec_name, to_variant(m1), to_variant(m2), to_variant(m3));
    hrm::write_predictions(out, out_file);
  });
}

int hrm_pearson(const double* x, const double* y, size_t n, double* value_out,
                int* degenerate_out) {
  return guarded([&] {
    require_arg(x, "x");
    require_arg(y, "y");
    require_arg(value_out, "value_out");
    hrm::Correlation c = hrm::pearson(std::vector<double>(x, x + n),
                                      std::vector<double>(y, y + n));
    *value_out = c.value;
    if (degenerate_out != nullptr) *degenerate_out = c.degenerate ? 1 : 0;
  });
}

int hrm_spearman(const double* x, const double* y, size_t n, double* value_out,
                 int* degenerate_out) {
  return guarded([&] {
    require_arg(x, "x");
    require_arg(y, "y");
    require_arg(value_out, "value_out");
    hrm::Correlation c = hrm::spearman(std::vector<double>(x, x + n),
                                       std::vector<double>(y, y + n));
    *value_out = c.value;
    if (degenerate_out != nullptr) *degenerate_out = c.degenerate ? 1 : 0;
  });
}

int hrm_kendall_tau(const double* x, const double* y, size_t n,
                    double* value_out, int* degenerate_out) {
  return guarded([&] {
    require_arg(x, "x");
    require_arg(y, "y");
    require_arg(value_out, "value_out");
    hrm::Correlation c = hrm::kendall_tau(std::vector<double>(x, x + n),
                                          std::vector<double>(y, y + n));
    *value_out = c.value;
    if (degenerate_out != nullptr) *degenerate_out = c.degenerate ? 1 : 0;
  });
}

}  // extern "C"
