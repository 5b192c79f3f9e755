#include "hrm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace hrm {

namespace {

void check_lengths(const std::vector<double>& x, const std::vector<double>& y,
                   const char* what) {
  require(x.size() == y.size(), ErrorCode::Shape,
          std::string(what) + ": length mismatch (" + std::to_string(x.size()) +
              " vs " + std::to_string(y.size()) + ")");
}

// Strict inversions in v, counted by merge sort.
uint64_t count_inversions(std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<double> tmp(n);
  uint64_t inv = 0;
  for (size_t width = 1; width < n; width *= 2) {
    for (size_t lo = 0; lo + width < n; lo += 2 * width) {
      size_t mid = lo + width;
      size_t hi = std::min(lo + 2 * width, n);
      size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          inv += mid - i;
          tmp[k++] = v[j++];
        } else {
          tmp[k++] = v[i++];
        }
      }
      while (i < mid) tmp[k++] = v[i++];
      while (j < hi) tmp[k++] = v[j++];
      std::copy(tmp.begin() + lo, tmp.begin() + hi, v.begin() + lo);
    }
  }
  return inv;
}

uint64_t tie_pairs(const std::vector<double>& sorted) {
  uint64_t t = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    uint64_t run = j - i;
    t += run * (run - 1) / 2;
    i = j;
  }
  return t;
}

}  // namespace

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
  check_lengths(x, y, "pearson");
  const size_t n = x.size();
  if (n < 2) return {0.0, true};
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double vx = 0, vy = 0, cov = 0;
  for (size_t i = 0; i < n; ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cov += dx * dy;
  }
  if (vx <= 0.0 || vy <= 0.0) return {0.0, true};
  return {cov / (std::sqrt(vx) * std::sqrt(vy)), false};
}

std::vector<double> midranks(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t k = i; k < j; ++k) ranks[order[k]] = mid;
    i = j;
  }
  return ranks;
}

Correlation spearman(const std::vector<double>& x, const std::vector<double>& y) {
  check_lengths(x, y, "spearman");
  if (x.size() < 2) return {0.0, true};
  return pearson(midranks(x), midranks(y));
}

Correlation kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  check_lengths(x, y, "kendall_tau");
  const size_t n = x.size();
  if (n < 2) return {0.0, true};

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  // Knight's method: after sorting by (x, y), discordant pairs are the
  // strict inversions of the y sequence.
  std::vector<double> ys(n);
  for (size_t i = 0; i < n; ++i) ys[i] = y[order[i]];

  uint64_t n0 = static_cast<uint64_t>(n) * (n - 1) / 2;

  // Joint-tie pairs before the y sequence gets permuted.
  uint64_t n3 = 0;
  {
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j < n && x[order[j]] == x[order[i]] && ys[j] == ys[i]) ++j;
      uint64_t run = j - i;
      n3 += run * (run - 1) / 2;
      i = j;
    }
  }
  uint64_t n1 = 0;
  {
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j < n && x[order[j]] == x[order[i]]) ++j;
      uint64_t run = j - i;
      n1 += run * (run - 1) / 2;
      i = j;
    }
  }
  uint64_t discordant = count_inversions(ys);  // ys now sorted
  uint64_t n2 = tie_pairs(ys);

  if (n0 == n1 || n0 == n2) return {0.0, true};
  double num = static_cast<double>(n0) - static_cast<double>(n1) -
               static_cast<double>(n2) + static_cast<double>(n3) -
               2.0 * static_cast<double>(discordant);
  double den = std::sqrt(static_cast<double>(n0 - n1)) *
               std::sqrt(static_cast<double>(n0 - n2));
  return {num / den, false};
}

double mean_squared_error(const std::vector<double>& x,
                          const std::vector<double>& y) {
  check_lengths(x, y, "mse");
  require(!x.empty(), ErrorCode::Validation, "mse: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double e = x[i] - y[i];
    acc += e * e;
  }
  return acc / x.size();
}

void system_aggregate(const PredictionSet& preds,
                      const std::vector<UtteranceRecord>& truth,
                      std::vector<std::string>& systems,
                      std::vector<double>& sys_pred_means,
                      std::vector<double>& sys_true_means) {
  std::map<std::string, const UtteranceRecord*> by_id;
  for (const auto& r : truth) by_id[r.utterance_id] = &r;

  std::string unknown;
  for (const auto& [id, score] : preds.entries) {
    (void)score;
    if (!by_id.count(id)) unknown += (unknown.empty() ? "" : ", ") + id;
  }
  require(unknown.empty(), ErrorCode::Validation,
          "predictions reference unknown utterance ids: " + unknown);

  struct Acc {
    double pred_sum = 0, true_sum = 0;
    int pred_n = 0, true_n = 0;
  };
  std::map<std::string, Acc> acc;  // ordered -> lexicographic output
  for (const auto& r : truth) {
    acc[r.system_id].true_sum += r.mos;
    acc[r.system_id].true_n += 1;
  }
  for (const auto& [id, score] : preds.entries) {
    const auto* r = by_id[id];
    acc[r->system_id].pred_sum += score;
    acc[r->system_id].pred_n += 1;
  }

  systems.clear();
  sys_pred_means.clear();
  sys_true_means.clear();
  for (const auto& [sys, a] : acc) {
    require(a.pred_n > 0, ErrorCode::Validation,
            "system '" + sys + "' present in truth but absent from predictions");
    systems.push_back(sys);
    sys_pred_means.push_back(a.pred_sum / a.pred_n);
    sys_true_means.push_back(a.true_sum / a.true_n);
  }
}

MetricReport full_report(const PredictionSet& preds,
                         const std::vector<UtteranceRecord>& truth) {
  std::map<std::string, double> mos_of;
  for (const auto& r : truth) mos_of[r.utterance_id] = r.mos;

  std::vector<double> p, y;
  for (const auto& [id, score] : preds.entries) {
    auto it = mos_of.find(id);
    require(it != mos_of.end(), ErrorCode::Validation,
            "prediction for unknown utterance id '" + id + "'");
    p.push_back(score);
    y.push_back(it->second);
  }
  require(!p.empty(), ErrorCode::Validation, "no predictions to evaluate");

  MetricReport rep;
  rep.utterance.mse = mean_squared_error(p, y);
  rep.utterance.lcc = pearson(p, y);
  rep.utterance.srcc = spearman(p, y);
  rep.utterance.ktau = kendall_tau(p, y);

  std::vector<std::string> systems;
  std::vector<double> sp, sy;
  system_aggregate(preds, truth, systems, sp, sy);
  rep.system.mse = mean_squared_error(sp, sy);
  rep.system.lcc = pearson(sp, sy);
  rep.system.srcc = spearman(sp, sy);
  rep.system.ktau = kendall_tau(sp, sy);
  return rep;
}

namespace {

void format_level(std::ostringstream& out, const std::string& prefix,
                  const LevelMetrics& m) {
  char buf[64];
  auto emit = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%.9f", v);
    out << prefix << '.' << key << '=' << buf << '\n';
  };
  emit("mse", m.mse);
  emit("lcc", m.lcc.value);
  emit("srcc", m.srcc.value);
  emit("ktau", m.ktau.value);
  auto flag = [&](const char* key, const Correlation& c) {
    if (c.degenerate) out << prefix << '.' << key << ".degenerate=1\n";
  };
  flag("lcc", m.lcc);
  flag("srcc", m.srcc);
  flag("ktau", m.ktau);
}

}  // namespace

std::string format_report(const MetricReport& report) {
  std::ostringstream out;
  format_level(out, "utt", report.utterance);
  format_level(out, "sys", report.system);
  return out.str();
}

}  // namespace hrm
