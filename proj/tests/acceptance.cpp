// Acceptance gate. Runs every acceptance criterion, prints one PASS/FAIL
// line per criterion, and exits nonzero if any fails. Oracles here are
// deliberately naive transcriptions of the definitions, independent of the
// library implementations they check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "highratemos.h"
#include "hrm/config.hpp"
#include "hrm/data.hpp"
#include "hrm/ensemble.hpp"
#include "hrm/losses.hpp"
#include "hrm/metrics.hpp"
#include "hrm/model.hpp"
#include "hrm/training.hpp"
#include "support/test_support.hpp"

using namespace hrm;
using hrm::test::TempDir;

namespace {

int g_failures = 0;

void check(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

void check_close(double a, double b, double tol, const std::string& what) {
  if (!(std::fabs(a - b) <= tol))
    throw std::runtime_error(what + ": " + std::to_string(a) + " vs " +
                             std::to_string(b));
}

void criterion(const char* name, const std::function<void()>& body) {
  try {
    body();
    std::printf("[PASS] %s\n", name);
  } catch (const std::exception& e) {
    std::printf("[FAIL] %s: %s\n", name, e.what());
    ++g_failures;
  } catch (...) {
    std::printf("[FAIL] %s: unknown exception\n", name);
    ++g_failures;
  }
  std::fflush(stdout);
}

Batch random_batch(Lcg64& rng, size_t n) {
  Batch b;
  b.preds = hrm::test::random_vector(rng, n, 0.5, 5.5);
  b.labels = hrm::test::random_vector(rng, n, 1.0, 5.0);
  return b;
}

// ---- naive loss oracles: direct transcriptions of the definitions ----

double oracle_contrastive(const Batch& b, double m) {
  double acc = 0;
  int pairs = 0;
  for (size_t i = 0; i < b.size(); ++i)
    for (size_t j = i + 1; j < b.size(); ++j) {
      double d = (b.preds[i] - b.preds[j]) - (b.labels[i] - b.labels[j]);
      acc += std::max(0.0, std::fabs(d) - m);
      pairs++;
    }
  return acc / pairs;
}

// Extremes in pick order s1 (max), s2 (2nd max), s4 (min), s3 (2nd min),
// ties toward the lower index.
void rel_rank_extremes(const Batch& b, int& s1, int& s2, int& s3, int& s4) {
  std::vector<int> order;
  auto pick = [&](bool want_max) {
    int best = -1;
    for (int i = 0; i < static_cast<int>(b.size()); ++i) {
      bool taken = false;
      for (int o : order) taken |= (o == i);
      if (taken) continue;
      if (best < 0) { best = i; continue; }
      if (want_max ? b.labels[i] > b.labels[best]
                   : b.labels[i] < b.labels[best])
        best = i;
    }
    order.push_back(best);
    return best;
  };
  s1 = pick(true);
  s2 = pick(true);
  s4 = pick(false);
  s3 = pick(false);
}

double oracle_rel_rank(const Batch& b, double m) {
  int s1, s2, s3, s4;
  rel_rank_extremes(b, s1, s2, s3, s4);
  double span = b.labels[s1] - b.labels[s4] + 1e-8;
  double t1 = std::max(0.0, b.preds[s2] - b.preds[s1] +
                                m * (b.labels[s1] - b.labels[s2]) / span);
  double t2 = std::max(0.0, b.preds[s4] - b.preds[s3] +
                                m * (b.labels[s3] - b.labels[s4]) / span);
  return t1 + t2;
}

double oracle_pearson(const std::vector<double>& x,
                      const std::vector<double>& y) {
  size_t n = x.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

double oracle_ccc(const Batch& b) {
  size_t n = b.size();
  double mp = 0, my = 0;
  for (size_t i = 0; i < n; ++i) { mp += b.preds[i]; my += b.labels[i]; }
  mp /= n;
  my /= n;
  double vp = 0, vy = 0, cov = 0;
  for (size_t i = 0; i < n; ++i) {
    vp += (b.preds[i] - mp) * (b.preds[i] - mp);
    vy += (b.labels[i] - my) * (b.labels[i] - my);
    cov += (b.preds[i] - mp) * (b.labels[i] - my);
  }
  vp /= n;
  vy /= n;
  cov /= n;
  return 2 * cov / (vp + vy + (mp - my) * (mp - my));
}

double oracle_dcq(const Batch& b, double w, double m) {
  double mse_acc = 0;
  for (size_t i = 0; i < b.size(); ++i)
    mse_acc += (b.preds[i] - b.labels[i]) * (b.preds[i] - b.labels[i]);
  mse_acc /= b.size();
  double rank = 0;
  int pairs = 0;
  for (size_t i = 0; i < b.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j)
      if (b.labels[i] > b.labels[j]) {
        rank += std::max(0.0, b.preds[j] - b.preds[i] + m);
        pairs++;
      }
  return mse_acc + (pairs ? w * rank / pairs : 0.0);
}

double oracle_utmos(const Batch& b, double m) {
  double clipped = 0;
  for (size_t i = 0; i < b.size(); ++i) {
    double e = b.preds[i] - b.labels[i];
    if (std::fabs(e) > 0.25) clipped += e * e;
  }
  clipped /= b.size();
  return clipped + 0.5 * oracle_contrastive(b, m);
}

double oracle_eval(const LossConfig& cfg, const Batch& b) {
  switch (cfg.name) {
    case LossName::Mse: {
      double a = 0;
      for (size_t i = 0; i < b.size(); ++i)
        a += (b.preds[i] - b.labels[i]) * (b.preds[i] - b.labels[i]);
      return a / b.size();
    }
    case LossName::Mae: {
      double a = 0;
      for (size_t i = 0; i < b.size(); ++i)
        a += std::fabs(b.preds[i] - b.labels[i]);
      return a / b.size();
    }
    case LossName::Contrastive:
      return oracle_contrastive(b, cfg.margin_contrastive);
    case LossName::RelRank:
      return oracle_rel_rank(b, cfg.margin_rank);
    case LossName::Lcc:
      return 1.0 - oracle_pearson(b.preds, b.labels);
    case LossName::Ccc:
      return 1.0 - oracle_ccc(b);
    case LossName::Dcq:
      return oracle_dcq(b, cfg.dcq_weight, cfg.margin_rank);
    case LossName::Utmos:
      return oracle_utmos(b, cfg.margin_contrastive);
  }
  return 0;
}

// True when any hinge/clip argument of the loss sits within eps of its
// kink, where a subgradient mismatch with finite differences is expected.
bool near_kink(const LossConfig& cfg, const Batch& b, double eps) {
  const size_t n = b.size();
  switch (cfg.name) {
    case LossName::Mse:
      return false;
    case LossName::Mae: {
      for (size_t i = 0; i < n; ++i)
        if (std::fabs(b.preds[i] - b.labels[i]) < eps) return true;
      return false;
    }
    case LossName::Contrastive: {
      for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
          double d = (b.preds[i] - b.preds[j]) - (b.labels[i] - b.labels[j]);
          if (std::fabs(std::fabs(d) - cfg.margin_contrastive) < eps)
            return true;
          if (std::fabs(d) < eps) return true;  // |.| kink
        }
      return false;
    }
    case LossName::RelRank: {
      int s1, s2, s3, s4;
      rel_rank_extremes(b, s1, s2, s3, s4);
      double span = b.labels[s1] - b.labels[s4] + 1e-8;
      double a1 = b.preds[s2] - b.preds[s1] +
                  cfg.margin_rank * (b.labels[s1] - b.labels[s2]) / span;
      double a2 = b.preds[s4] - b.preds[s3] +
                  cfg.margin_rank * (b.labels[s3] - b.labels[s4]) / span;
      return std::fabs(a1) < eps || std::fabs(a2) < eps;
    }
    case LossName::Lcc:
    case LossName::Ccc:
      return false;  // smooth away from degenerate variance
    case LossName::Dcq: {
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
          if (b.labels[i] > b.labels[j] &&
              std::fabs(b.preds[j] - b.preds[i] + cfg.margin_rank) < eps)
            return true;
      return false;
    }
    case LossName::Utmos: {
      for (size_t i = 0; i < n; ++i)
        if (std::fabs(std::fabs(b.preds[i] - b.labels[i]) - 0.25) < eps)
          return true;
      LossConfig c = cfg;
      c.name = LossName::Contrastive;
      return near_kink(c, b, eps);
    }
  }
  return false;
}

// ---- metric oracles ----

std::vector<double> oracle_midranks(const std::vector<double>& x) {
  size_t n = x.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) r[idx[k]] = mid;
    i = j + 1;
  }
  return r;
}

// O(n^2) Kendall tau-b with tie correction.
double oracle_tau_b(const std::vector<double>& x, const std::vector<double>& y,
                    bool& degenerate) {
  size_t n = x.size();
  double conc = 0, disc = 0, tx = 0, ty = 0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) { tx += 1; continue; }
      if (dy == 0) { ty += 1; continue; }
      if (dx * dy > 0) conc += 1;
      else disc += 1;
    }
  double denom = std::sqrt((conc + disc + tx) * (conc + disc + ty));
  degenerate = denom == 0;
  return degenerate ? 0.0 : (conc - disc) / denom;
}

// ---- fixtures ----

std::vector<UtteranceRecord> truth_fixture() {
  // A: two utts at 3.5; B: one utt at 2; C: three utts 1, 3, 5
  std::vector<UtteranceRecord> t;
  auto rec = [&](const std::string& id, const std::string& sys, double mos) {
    UtteranceRecord r;
    r.utterance_id = id;
    r.audio_path = "x.wav";
    r.system_id = sys;
    r.mos = mos;
    r.sample_rate = 16000;
    t.push_back(r);
  };
  rec("a1", "A", 3.5);
  rec("a2", "A", 3.5);
  rec("b1", "B", 2.0);
  rec("c1", "C", 1.0);
  rec("c2", "C", 3.0);
  rec("c3", "C", 5.0);
  return t;
}

PredictionSet fixture_preds(Lcg64& rng, const std::vector<std::string>& ids,
                            const std::vector<std::string>& systems) {
  PredictionSet p;
  for (size_t i = 0; i < ids.size(); ++i)
    p.add(ids[i], 1.0 + 4.0 * rng.uniform(), systems[i]);
  return p;
}

bool params_have_prefix(std::vector<ParamRef>& params,
                        const std::string& prefix) {
  for (const auto& p : params)
    if (p.name.rfind(prefix, 0) == 0) return true;
  return false;
}

// hrm_config wrapper for the determinism criterion (exercises the C API).
struct CApiConfig {
  hrm_config* cfg = nullptr;
  CApiConfig() { check(hrm_config_new(&cfg) == HRM_OK, "hrm_config_new"); }
  ~CApiConfig() { hrm_config_free(cfg); }
  void set(const std::string& k, const std::string& v) {
    check(hrm_config_set(cfg, k.c_str(), v.c_str()) == HRM_OK,
          "hrm_config_set " + k + ": " + hrm_last_error());
  }
};

// ---- the criteria ----

void loss_gradient_suite() {
  auto t0 = std::chrono::steady_clock::now();
  Lcg64 rng(101);
  const double h = 1e-5;
  for (LossName name : all_losses()) {
    LossConfig cfg;
    cfg.name = name;
    int tested = 0, iter = 0;
    while (tested < 100) {
      check(++iter < 5000, "could not draw 100 kink-free batches");
      Batch b = random_batch(rng, 8);
      if (near_kink(cfg, b, 1e-3)) continue;
      if (name == LossName::Lcc || name == LossName::Ccc) {
        if (lcc_loss(b) == 1.0) continue;  // degenerate variance
      }
      ++tested;
      std::vector<double> g = loss_gradient(cfg, b);
      double norm = 0;
      for (double v : g) norm = std::max(norm, std::fabs(v));
      for (size_t i = 0; i < b.size(); ++i) {
        Batch up = b, dn = b;
        up.preds[i] += h;
        dn.preds[i] -= h;
        double fd = (evaluate_loss(cfg, up) - evaluate_loss(cfg, dn)) / (2 * h);
        double scale = std::max({std::fabs(fd), norm, 1e-8});
        check(std::fabs(g[i] - fd) / scale < 1e-4,
              "gradient mismatch for " + loss_to_string(name) + " at element " +
                  std::to_string(i));
      }
    }
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  check(secs < 30.0, "suite took " + std::to_string(secs) + "s (limit 30s)");
}

void loss_oracle_suite() {
  Lcg64 rng(202);
  for (int k = 0; k < 1000; ++k) {
    Batch b = random_batch(rng, 8);
    for (LossName name : all_losses()) {
      LossConfig cfg;
      cfg.name = name;
      double got = evaluate_loss(cfg, b);
      double want = oracle_eval(cfg, b);
      check_close(got, want, 1e-12 * std::max(1.0, std::fabs(want)),
                  loss_to_string(name) + " vs oracle, batch " +
                      std::to_string(k));
    }
  }
}

void published_constant_pins() {
  check(LossConfig::tau_clip == 0.25, "tau_clip != 0.25");
  // |error| <= tau contributes zero; just above it does not.
  Batch at;
  at.labels = {2.0, 3.0};
  at.preds = {2.25, 3.25};  // equal pair differences, both |e| == tau
  check(utmos_loss(at, 0.1) == 0.0, "utmos at |e|=0.25 should be exactly 0");
  Batch above = at;
  above.preds = {2.26, 3.26};
  check(utmos_loss(above, 0.1) > 0.0, "utmos above the clip must be positive");

  TrainConfig tc;
  check(tc.learning_rate == 1e-3, "default learning rate != 1e-3");
  check(tc.batch_size == 8, "default batch size != 8");
  check(tc.patience_steps == 2000, "default patience != 2000");

  std::string resolved = RunConfig::defaults().to_text();
  for (const char* line : {"train.learning_rate=0.001", "train.batch_size=8",
                           "train.patience_steps=2000"})
    check(resolved.find(line) != std::string::npos,
          std::string("resolved defaults missing '") + line + "'");
}

void metric_oracle_suite() {
  Lcg64 rng(303);
  int compared = 0;
  for (int k = 0; k < 200; ++k) {
    size_t n = 5 + rng.below(46);
    std::vector<double> x(n), y(n);
    for (size_t i = 0; i < n; ++i) {
      x[i] = 0.5 * (1.0 + static_cast<double>(rng.below(10)));  // forced ties
      y[i] = 0.5 * (1.0 + static_cast<double>(rng.below(10)));
    }
    bool tau_degen = false;
    double tau_want = oracle_tau_b(x, y, tau_degen);
    Correlation tau_got = kendall_tau(x, y);
    check(tau_got.degenerate == tau_degen, "tau degeneracy flag mismatch");
    if (!tau_degen)
      check_close(tau_got.value, tau_want, 1e-12, "kendall tau-b vs brute force");

    std::vector<double> rx = oracle_midranks(x), ry = oracle_midranks(y);
    bool const_rank = std::all_of(rx.begin(), rx.end(),
                                  [&](double v) { return v == rx[0]; }) ||
                      std::all_of(ry.begin(), ry.end(),
                                  [&](double v) { return v == ry[0]; });
    Correlation s_got = spearman(x, y);
    if (const_rank) {
      check(s_got.degenerate && s_got.value == 0.0,
            "constant ranks must be flagged 0");
    } else {
      check_close(s_got.value, oracle_pearson(rx, ry), 1e-12,
                  "spearman vs rank-then-pearson");
      ++compared;
    }
  }
  check(compared >= 150, "too few non-degenerate comparisons");

  // Degenerate (constant) inputs: flagged 0, never NaN.
  std::vector<double> flat = {2.0, 2.0, 2.0, 2.0};
  std::vector<double> ramp = {1.0, 2.0, 3.0, 4.0};
  for (const Correlation& c :
       {pearson(flat, ramp), spearman(flat, ramp), kendall_tau(flat, ramp),
        pearson(ramp, flat), spearman(ramp, flat), kendall_tau(ramp, flat)}) {
    check(c.degenerate, "constant input not flagged degenerate");
    check(c.value == 0.0 && !std::isnan(c.value), "degenerate value must be 0");
  }
}

void system_aggregation_fixture() {
  auto truth = truth_fixture();
  PredictionSet p;
  p.add("a1", 3.0, "A");
  p.add("a2", 4.0, "A");
  p.add("b1", 2.0, "B");
  p.add("c1", 1.5, "C");
  p.add("c2", 2.5, "C");
  p.add("c3", 4.4, "C");

  std::vector<std::string> systems;
  std::vector<double> pm, tm;
  system_aggregate(p, truth, systems, pm, tm);
  check(systems == std::vector<std::string>({"A", "B", "C"}),
        "system order must be lexicographic");
  const double exp_pm[3] = {3.5, 2.0, (1.5 + 2.5 + 4.4) / 3.0};
  const double exp_tm[3] = {3.5, 2.0, 3.0};
  for (int i = 0; i < 3; ++i) {
    check_close(pm[i], exp_pm[i], 1e-12, "per-system prediction mean");
    check_close(tm[i], exp_tm[i], 1e-12, "per-system true mean");
  }

  MetricReport rep = full_report(p, truth);
  // Hand numbers at the system level: means are [3.5, 2, 2.8] vs
  // [3.5, 2, 3]; both rank the systems A > C > B, so SRCC = KTAU = 1.
  std::vector<double> hp(exp_pm, exp_pm + 3), ht(exp_tm, exp_tm + 3);
  check_close(rep.system.lcc.value, oracle_pearson(hp, ht), 1e-12, "sys lcc");
  check_close(rep.system.srcc.value, 1.0, 1e-12, "sys srcc");
  check_close(rep.system.ktau.value, 1.0, 1e-12, "sys ktau");
  check_close(rep.system.mse, 0.2 * 0.2 / 3.0, 1e-12, "sys mse");
}

void architecture_invariants() {
  ModelDims dims;
  dims.d_enc = 8;
  dims.d_sr = 2;
  dims.f_mel = 6;
  dims.c_mfcc = 3;
  dims.cnn_channels = 2;
  dims.attn_heads = 2;
  dims.blstm_hidden = 3;

  Lcg64 rng(404);
  int valid = 0;
  for (Variant v : {Variant::M1, Variant::M2, Variant::M3}) {
    for (int mask = 0; mask < 128; ++mask) {
      ModelConfig cfg;
      cfg.variant = v;
      cfg.dims = dims;
      cfg.toggles.ssl = mask & 1;
      cfg.toggles.sr_emb = mask & 2;
      cfg.toggles.mel = mask & 4;
      cfg.toggles.multi_cnn = mask & 8;
      cfg.toggles.mfcc = mask & 16;
      cfg.toggles.cross_attn = mask & 32;
      cfg.toggles.blstm = mask & 64;
      try {
        cfg.validate();
      } catch (const Error&) {
        continue;  // invalid subset (no feature stream enabled)
      }
      ++valid;

      int t = 1 + static_cast<int>(rng.below(200));
      FeatureBundle b;
      auto fill = [&](Matrix& m, int cols) {
        m = Matrix(t, cols);
        for (auto& x : m.v) x = rng.uniform_sym(1.0);
      };
      fill(b.encoder_frames, dims.d_enc);
      fill(b.mel_aligned, dims.f_mel);
      fill(b.mfcc_aligned, dims.c_mfcc);
      b.rate_id = 0;

      ScoreModel model(cfg, /*seed=*/mask + 1);
      double s0 = model.forward(b);
      check(std::isfinite(s0), "non-finite forward score");

      check(model.parameter_count() == parameter_count(cfg),
            "parameter count disagrees with closed form");
      auto params = model.parameters();
      if (!cfg.toggles.sr_emb)
        check(!params_have_prefix(params, "sr_emb."), "sr_emb params leak");
      if (!cfg.cnn_active())
        check(!params_have_prefix(params, "cnn."), "cnn params leak");
      if (!cfg.mel_proj_active())
        check(!params_have_prefix(params, "mel_proj."), "mel_proj params leak");
      if (!cfg.attn_active())
        check(!params_have_prefix(params, "attn."), "attention params leak");
      if (!cfg.toggles.blstm)
        check(!params_have_prefix(params, "lstm."), "blstm params leak");

      b.rate_id = 1;
      double s1 = model.forward(b);
      b.rate_id = 2;
      double s2 = model.forward(b);
      if (cfg.toggles.sr_emb) {
        check(s0 != s1 && s1 != s2,
              "sr_emb on: predictions must differ across rate ids");
      } else {
        check(s0 == s1 && s1 == s2,
              "sr_emb off: predictions must be bit-identical across rate ids");
      }
    }
  }
  check(valid >= 300, "too few valid toggle subsets exercised");
}

void synthetic_overfit() {
  auto t0 = std::chrono::steady_clock::now();
  TempDir dir;
  auto data = hrm::test::make_planted_dataset(dir.path(), 60, 6, 7);

  ToyEncoder enc(32, 0);
  FeatureConfig fcfg;
  fcfg.n_mel = 32;
  fcfg.n_mfcc = 8;
  PreparedDataset all = prepare_dataset(data.records, enc, fcfg);

  PreparedDataset train_ds, dev_ds;
  for (size_t i = 0; i < all.records.size(); ++i) {
    auto& dst = (i % 5 == 4) ? dev_ds : train_ds;  // 48 train / 12 dev
    dst.records.push_back(all.records[i]);
    dst.bundles.push_back(all.bundles[i]);
  }

  TrainConfig cfg = hrm::test::small_train_config(Variant::M1);
  cfg.max_steps = 2000;
  TrainResult r = train(train_ds, dev_ds, cfg, 0);

  check(r.history.best_step <= 2000, "best step beyond the 2000-step budget");
  check(r.history.best_srcc >= 0.9,
        "dev system SRCC " + std::to_string(r.history.best_srcc) + " < 0.9");

  PredictionSet train_preds = predict(*r.best_model, train_ds);
  std::vector<double> ph, yh;
  for (const auto& rec : train_ds.records) {
    ph.push_back(train_preds.entries.at(rec.utterance_id));
    yh.push_back(rec.mos);
  }
  Correlation utt = spearman(ph, yh);
  check(!utt.degenerate && utt.value >= 0.95,
        "train utterance SRCC " + std::to_string(utt.value) + " < 0.95");

  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  check(secs < 300.0, "overfit run took " + std::to_string(secs) + "s");
}

void early_stopping_rule() {
  // Peak at 600, never beaten: stop exactly at 600 + patience.
  {
    EarlyStopper es(2000);
    int stop_step = -1;
    for (int step = 100; step <= 10000; step += 100) {
      double srcc = (step == 600) ? 0.9 : 0.5;
      es.observe(step, srcc);
      if (es.should_stop(step)) { stop_step = step; break; }
    }
    check(es.best_step() == 600, "best step must be 600");
    check(stop_step == 2600, "stop step must be best + patience = 2600");
  }
  // Plateau of equal values: the checkpoint is the first argmax.
  {
    EarlyStopper es(300);
    for (int step = 100; step <= 900; step += 100) es.observe(step, 0.8);
    check(es.best_step() == 100, "ties must keep the first argmax");
    check(es.best_srcc() == 0.8, "best srcc must be the plateau value");
    check(!es.should_stop(399) && es.should_stop(400),
          "stop exactly at best + patience");
  }
  // Strictly improving sequence never stops.
  {
    EarlyStopper es(200);
    for (int step = 100; step <= 2000; step += 100) {
      es.observe(step, step / 10000.0);
      check(!es.should_stop(step), "improving run must not stop");
    }
    check(es.best_step() == 2000, "last improvement must be the best");
  }
}

void ensemble_algebra() {
  Lcg64 rng(505);
  std::vector<std::string> ids = {"u1", "u2", "u3", "u4"};
  std::vector<std::string> systems = {"s1", "s1", "s2", "s2"};

  VariantPredictions m[3];
  std::vector<double> srccs[3] = {
      {0.3, 0.7, 0.7, 0.1, 0.2},  // best fold 1 (tie at 0.7 -> lower index)
      {0.5, 0.4, 0.9, 0.2, 0.1},  // best fold 2
      {0.6, 0.1, 0.2, 0.8, 0.3},  // best fold 3
  };
  for (int v = 0; v < 3; ++v) {
    for (int f = 0; f < 5; ++f)
      m[v].fold_sets.push_back(fixture_preds(rng, ids, systems));
    m[v].fold_dev_srcc = srccs[v];
    m[v].standard = fixture_preds(rng, ids, systems);
    m[v].has_standard = true;
  }
  const int best[3] = {1, 2, 3};

  auto fold_avg = [&](int v, const std::string& id) {
    double acc = 0;
    for (int f = 0; f < 5; ++f) acc += m[v].fold_sets[f].entries.at(id);
    return acc / 5.0;
  };
  auto mean3 = [](double a, double b, double c) { return (a + b + c) / 3.0; };

  for (const std::string& id : ids) {
    double avg[3], bof[3], std_[3];
    for (int v = 0; v < 3; ++v) {
      avg[v] = fold_avg(v, id);
      bof[v] = m[v].fold_sets[best[v]].entries.at(id);
      std_[v] = m[v].standard.entries.at(id);
    }
    struct Case {
      const char* name;
      double want;
    } cases[] = {
        {"setting1", mean3(avg[0], std_[1], std_[2])},
        {"setting2", mean3(avg[0], avg[1], avg[2])},
        {"setting3", mean3(std_[0], std_[1], std_[2])},
        {"setting4", mean3(bof[0], bof[1], bof[2])},
        {"highratemos", mean3(bof[0], std_[1], std_[2])},
    };
    for (const Case& c : cases) {
      PredictionSet got = build_ensemble(c.name, m[0], m[1], m[2]);
      check_close(got.entries.at(id), c.want, 1e-12,
                  std::string(c.name) + " mean for " + id);
      check(got.system_of.at(id) == (id < "u3" ? "s1" : "s2"),
            "system mapping preserved");
    }
  }

  // The highratemos setting is exactly the mean of the three named sets.
  PredictionSet direct =
      average({m[0].fold_sets[1], m[1].standard, m[2].standard});
  PredictionSet hrm_set = build_ensemble("highratemos", m[0], m[1], m[2]);
  for (const std::string& id : ids)
    check_close(hrm_set.entries.at(id), direct.entries.at(id), 0.0,
                "highratemos != mean(M1 best-of-fold, M2 std, M3 std)");
}

void cv_determinism() {
  TempDir dir;
  auto data = hrm::test::make_planted_dataset(dir.path(), 12, 4, 31);

  auto run_cv = [&](const std::string& out) {
    CApiConfig cfg;
    cfg.set("feature.n_mel", "32");
    cfg.set("feature.n_mfcc", "8");
    cfg.set("encoder.dim", "32");
    cfg.set("model.d_sr", "8");
    cfg.set("model.cnn_channels", "8");
    cfg.set("model.blstm_hidden", "24");
    cfg.set("train.max_steps", "60");
    cfg.set("train.validate_every", "30");
    cfg.set("train.patience_steps", "60");
    cfg.set("cv.k", "2");
    cfg.set("seed", "11");
    int rc = hrm_cv(cfg.cfg, data.manifest_path.c_str(), out.c_str(), nullptr);
    check(rc == HRM_OK, std::string("hrm_cv failed: ") + hrm_last_error());
  };
  run_cv(dir.file("a"));
  run_cv(dir.file("b"));

  for (const char* f : {"pooled.tsv", "pooled_report.txt", "cv_summary.csv"})
    check(hrm::test::read_file(dir.file("a/") + f) ==
              hrm::test::read_file(dir.file("b/") + f),
          std::string(f) + " differs between identical-seed runs");
}

}  // namespace

int main() {
  criterion("loss gradients match finite differences (8 losses x 100 batches)",
            loss_gradient_suite);
  criterion("losses equal naive enumeration oracles (1000 batches, 1e-12)",
            loss_oracle_suite);
  criterion("published constants pinned (tau=0.25, lr=1e-3, batch=8, patience=2000)",
            published_constant_pins);
  criterion("metric oracles (KTAU brute force, SRCC rank-then-Pearson, "
            "degenerate flags)",
            metric_oracle_suite);
  criterion("system-level aggregation matches the hand fixture",
            system_aggregation_fixture);
  criterion("architecture invariants over variants x toggles x T",
            architecture_invariants);
  criterion("synthetic overfit (train SRCC >= 0.95, dev system SRCC >= 0.9)",
            synthetic_overfit);
  criterion("early-stopping rule is exact on injected sequences",
            early_stopping_rule);
  criterion("ensemble algebra matches hand-computed means (all 5 settings)",
            ensemble_algebra);
  criterion("cross-validation is byte-identical under a fixed seed",
            cv_determinism);

  if (g_failures > 0) {
    std::printf("ACCEPTANCE: %d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("ACCEPTANCE: all criteria passed\n");
  return 0;
}
