// hrm - command-line front end for the HighRateMOS C API.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "highratemos.h"

namespace {

struct ConfigHandle {
  hrm_config* cfg = nullptr;
  ~ConfigHandle() { hrm_config_free(cfg); }
};

int fail(int rc) {
  std::fprintf(stderr, "error: %s\n", hrm_last_error());
  return rc == HRM_OK ? 1 : -rc;
}

int load_config(const std::string& config_path,
                const std::vector<std::string>& sets, uint64_t seed,
                bool seed_given, ConfigHandle& out) {
  int rc = config_path.empty() ? hrm_config_new(&out.cfg)
                               : hrm_config_load(config_path.c_str(), &out.cfg);
  if (rc != HRM_OK) return rc;
  for (const std::string& kv : sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n",
                   kv.c_str());
      return HRM_ERR_CONFIG;
    }
    rc = hrm_config_set(out.cfg, kv.substr(0, eq).c_str(),
                        kv.substr(eq + 1).c_str());
    if (rc != HRM_OK) return rc;
  }
  if (seed_given) {
    rc = hrm_config_set(out.cfg, "seed", std::to_string(seed).c_str());
    if (rc != HRM_OK) return rc;
  }
  return HRM_OK;
}

const char* cache_dir_or_env(const std::string& flag_value,
                             std::string& storage) {
  if (!flag_value.empty()) {
    storage = flag_value;
    return storage.c_str();
  }
  const char* env = std::getenv("HRM_CACHE_DIR");
  if (env != nullptr && env[0] != '\0') {
    storage = env;
    return storage.c_str();
  }
  return nullptr;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= csv.size()) {
    size_t comma = csv.find(',', start);
    if (comma == std::string::npos) {
      if (start < csv.size()) out.push_back(csv.substr(start));
      break;
    }
    out.push_back(csv.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HighRateMOS: sampling-rate-aware speech quality prediction"};
  app.require_subcommand(1);

  std::string config_path, manifest, out_path, cache_flag, checkpoint;
  std::string pred_file, component, spec_name;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  bool seed_given = false;

  auto add_common = [&](CLI::App* cmd, bool with_manifest = true) {
    cmd->add_option("--config", config_path, "run config file (key=value)");
    cmd->add_option("--set", sets, "override a config key (key=value)");
    cmd->add_option_function<uint64_t>(
           "--seed",
           [&](uint64_t s) {
             seed = s;
             seed_given = true;
           },
           "override the run seed");
    if (with_manifest) {
      cmd->add_option("--manifest", manifest, "manifest CSV")->required();
    }
  };

  auto* c_extract = app.add_subcommand("extract", "build the feature cache");
  add_common(c_extract);
  c_extract->add_option("--out", out_path, "cache directory")->required();

  auto* c_train = app.add_subcommand("train", "train one model");
  add_common(c_train);
  c_train->add_option("--out", out_path, "output directory")->required();
  c_train->add_option("--cache", cache_flag, "feature cache directory");

  auto* c_cv = app.add_subcommand("cv", "k-fold cross-validation");
  add_common(c_cv);
  c_cv->add_option("--out", out_path, "output directory")->required();
  c_cv->add_option("--cache", cache_flag, "feature cache directory");

  auto* c_predict = app.add_subcommand("predict", "score a manifest");
  add_common(c_predict);
  c_predict->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  c_predict->add_option("--out", out_path, "output prediction TSV")->required();
  c_predict->add_option("--cache", cache_flag, "feature cache directory");

  auto* c_eval = app.add_subcommand("evaluate", "metric report for predictions");
  c_eval->add_option("--pred", pred_file, "prediction TSV")->required();
  c_eval->add_option("--manifest", manifest, "manifest CSV")->required();

  auto* c_ensemble = app.add_subcommand("ensemble", "combine prediction files");
  c_ensemble->add_option("--spec", spec_name,
                         "setting1|setting2|setting3|setting4|highratemos")
      ->required();
  c_ensemble->add_option("--out", out_path, "output prediction TSV")->required();
  std::string m_folds[3], m_srcc[3], m_std[3];
  c_ensemble->add_option("--m1-folds", m_folds[0], "M1 fold prediction files (comma list)");
  c_ensemble->add_option("--m1-srcc", m_srcc[0], "M1 fold dev SRCCs (comma list)");
  c_ensemble->add_option("--m1-std", m_std[0], "M1 standard-training predictions");
  c_ensemble->add_option("--m2-folds", m_folds[1], "M2 fold prediction files");
  c_ensemble->add_option("--m2-srcc", m_srcc[1], "M2 fold dev SRCCs");
  c_ensemble->add_option("--m2-std", m_std[1], "M2 standard-training predictions");
  c_ensemble->add_option("--m3-folds", m_folds[2], "M3 fold prediction files");
  c_ensemble->add_option("--m3-srcc", m_srcc[2], "M3 fold dev SRCCs");
  c_ensemble->add_option("--m3-std", m_std[2], "M3 standard-training predictions");

  auto* c_ablate = app.add_subcommand("ablate", "retrain with one component off");
  add_common(c_ablate);
  c_ablate->add_option("--component", component,
                       "ssl|sr_emb|mel|multi_cnn|mfcc|cross_attn|blstm")
      ->required();
  c_ablate->add_option("--out", out_path, "output directory")->required();
  c_ablate->add_option("--cache", cache_flag, "feature cache directory");

  CLI11_PARSE(app, argc, argv);

  std::string cache_storage;

  if (c_extract->parsed()) {
    ConfigHandle cfg;
    int rc = load_config(config_path, sets, seed, seed_given, cfg);
    if (rc != HRM_OK) return fail(rc);
    rc = hrm_extract(cfg.cfg, manifest.c_str(), out_path.c_str());
    if (rc != HRM_OK) return fail(rc);
    return 0;
  }

  if (c_train->parsed() || c_ablate->parsed()) {
    ConfigHandle cfg;
    int rc = load_config(config_path, sets, seed, seed_given, cfg);
    if (rc != HRM_OK) return fail(rc);
    if (c_ablate->parsed()) {
      rc = hrm_config_ablate(cfg.cfg, component.c_str());
      if (rc != HRM_OK) return fail(rc);
    }
    const char* cache = cache_dir_or_env(cache_flag, cache_storage);
    rc = hrm_train(cfg.cfg, manifest.c_str(), out_path.c_str(), cache);
    if (rc != HRM_OK) return fail(rc);
    return 0;
  }

  if (c_cv->parsed()) {
    ConfigHandle cfg;
    int rc = load_config(config_path, sets, seed, seed_given, cfg);
    if (rc != HRM_OK) return fail(rc);
    const char* cache = cache_dir_or_env(cache_flag, cache_storage);
    rc = hrm_cv(cfg.cfg, manifest.c_str(), out_path.c_str(), cache);
    if (rc != HRM_OK) return fail(rc);
    return 0;
  }

  if (c_predict->parsed()) {
    ConfigHandle cfg;
    int rc = load_config(config_path, sets, seed, seed_given, cfg);
    if (rc != HRM_OK) return fail(rc);
    const char* cache = cache_dir_or_env(cache_flag, cache_storage);
    rc = hrm_predict(cfg.cfg, checkpoint.c_str(), manifest.c_str(),
                     out_path.c_str(), cache);
    if (rc != HRM_OK) return fail(rc);
    return 0;
  }

  if (c_eval->parsed()) {
    size_t needed = 0;
    int rc = hrm_evaluate(pred_file.c_str(), manifest.c_str(), nullptr, 0, &needed);
    if (rc != HRM_OK) return fail(rc);
    std::string report(needed, '\0');
    rc = hrm_evaluate(pred_file.c_str(), manifest.c_str(), report.data(),
                      report.size(), nullptr);
    if (rc != HRM_OK) return fail(rc);
    std::fputs(report.c_str(), stdout);
    return 0;
  }

  if (c_ensemble->parsed()) {
    hrm_ensemble_member members[3];
    std::vector<std::string> fold_names[3];
    std::vector<const char*> fold_ptrs[3];
    std::vector<double> srccs[3];
    for (int i = 0; i < 3; ++i) {
      members[i] = hrm_ensemble_member{nullptr, nullptr, 0, nullptr};
      fold_names[i] = split_list(m_folds[i]);
      for (const auto& f : fold_names[i]) fold_ptrs[i].push_back(f.c_str());
      for (const auto& s : split_list(m_srcc[i])) srccs[i].push_back(std::stod(s));
      if (!fold_ptrs[i].empty()) {
        if (!srccs[i].empty() && srccs[i].size() != fold_ptrs[i].size()) {
          std::fprintf(stderr, "error: --m%d-srcc count does not match --m%d-folds\n",
                       i + 1, i + 1);
          return 1;
        }
        members[i].fold_files = fold_ptrs[i].data();
        members[i].fold_srcc = srccs[i].empty() ? nullptr : srccs[i].data();
        members[i].n_folds = static_cast<int>(fold_ptrs[i].size());
      }
      if (!m_std[i].empty()) members[i].std_file = m_std[i].c_str();
    }
    int rc = hrm_ensemble(spec_name.c_str(), &members[0], &members[1],
                          &members[2], out_path.c_str());
    if (rc != HRM_OK) return fail(rc);
    return 0;
  }

  return 1;
}
