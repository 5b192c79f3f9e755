#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hrm/metrics.hpp"
#include "test_support.hpp"

using namespace hrm;

namespace {

double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  size_t n = x.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
  mx /= n; my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// mid-ranks by sorting indices and averaging over tie runs
std::vector<double> oracle_midranks(const std::vector<double>& x) {
  size_t n = x.size();
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    double rank = (i + j) / 2.0 + 1.0;  // average of 1-based positions
    for (size_t k = i; k <= j; ++k) r[idx[k]] = rank;
    i = j + 1;
  }
  return r;
}

// O(n^2) tau-b
double oracle_ktau(const std::vector<double>& x, const std::vector<double>& y,
                   bool* degenerate) {
  size_t n = x.size();
  long long conc = 0, disc = 0, tx = 0, ty = 0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) { tx++; ty++; }
      else if (dx == 0) tx++;
      else if (dy == 0) ty++;
      else if (dx * dy > 0) conc++;
      else disc++;
    }
  long long n0 = static_cast<long long>(n) * (n - 1) / 2;
  double denom = std::sqrt(static_cast<double>(n0 - tx)) *
                 std::sqrt(static_cast<double>(n0 - ty));
  if (denom == 0) { *degenerate = true; return 0.0; }
  *degenerate = false;
  return (conc - disc) / denom;
}

std::vector<double> with_ties(Lcg64& rng, size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = std::floor(rng.uniform() * 6) / 2.0;  // coarse grid
  return v;
}

}  // namespace

TEST_CASE("pearson: exact lines") {
  std::vector<double> x = {0, 1, 2, 3, 4};
  std::vector<double> up(5), down(5);
  for (int i = 0; i < 5; ++i) { up[i] = 3 * x[i] - 2; down[i] = -x[i]; }
  CHECK(pearson(x, up).value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(x, down).value == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_FALSE(pearson(x, up).degenerate);
}

TEST_CASE("pearson: random vectors match the direct formula") {
  Lcg64 rng(3);
  for (int it = 0; it < 200; ++it) {
    size_t n = 3 + rng.below(40);
    auto x = hrm::test::random_vector(rng, n, -2, 7);
    auto y = hrm::test::random_vector(rng, n, 0, 5);
    Correlation c = pearson(x, y);
    REQUIRE_FALSE(c.degenerate);
    REQUIRE(std::fabs(c.value - oracle_pearson(x, y)) <= 1e-12);
  }
}

TEST_CASE("pearson: constant input flagged degenerate, value 0") {
  std::vector<double> x = {2, 2, 2};
  std::vector<double> y = {1, 2, 3};
  Correlation c = pearson(x, y);
  CHECK(c.value == 0.0);
  CHECK(c.degenerate);
  CHECK(pearson(y, x).degenerate);
}

TEST_CASE("spearman: monotone invariance") {
  std::vector<double> x = {0.5, 1.0, 2.0, 3.5, 4.0};
  std::vector<double> y(5);
  for (int i = 0; i < 5; ++i) y[i] = std::exp(x[i]);
  CHECK(spearman(x, y).value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("midranks: tie fixture") {
  std::vector<double> x = {1, 2, 2, 3};
  auto r = midranks(x);
  REQUIRE(r.size() == 4);
  CHECK(r[0] == 1.0);
  CHECK(r[1] == 2.5);
  CHECK(r[2] == 2.5);
  CHECK(r[3] == 4.0);
}

TEST_CASE("spearman: random tied vectors match rank-then-pearson") {
  Lcg64 rng(11);
  for (int it = 0; it < 200; ++it) {
    size_t n = 4 + rng.below(30);
    auto x = with_ties(rng, n);
    auto y = with_ties(rng, n);
    Correlation c = spearman(x, y);
    auto rx = oracle_midranks(x);
    auto ry = oracle_midranks(y);
    bool x_flat = std::all_of(rx.begin(), rx.end(), [&](double v) { return v == rx[0]; });
    bool y_flat = std::all_of(ry.begin(), ry.end(), [&](double v) { return v == ry[0]; });
    if (x_flat || y_flat) {
      REQUIRE(c.degenerate);
      REQUIRE(c.value == 0.0);
    } else {
      REQUIRE_FALSE(c.degenerate);
      REQUIRE(std::fabs(c.value - oracle_pearson(rx, ry)) <= 1e-12);
    }
  }
}

TEST_CASE("kendall: identical and reversed orderings") {
  std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> rev = {5, 4, 3, 2, 1};
  CHECK(kendall_tau(x, x).value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(kendall_tau(x, rev).value == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("kendall: 200 random tied vectors match the brute-force oracle") {
  Lcg64 rng(17);
  for (int it = 0; it < 200; ++it) {
    size_t n = 4 + rng.below(40);
    auto x = with_ties(rng, n);
    auto y = with_ties(rng, n);
    Correlation c = kendall_tau(x, y);
    bool want_deg = false;
    double want = oracle_ktau(x, y, &want_deg);
    REQUIRE(c.degenerate == want_deg);
    REQUIRE(std::fabs(c.value - want) <= 1e-12);
  }
}

TEST_CASE("kendall: constant vector degenerate") {
  std::vector<double> x = {3, 3, 3, 3};
  std::vector<double> y = {1, 2, 3, 4};
  Correlation c = kendall_tau(x, y);
  CHECK(c.value == 0.0);
  CHECK(c.degenerate);
}

TEST_CASE("mean_squared_error") {
  std::vector<double> x = {3, 4};
  std::vector<double> y = {2, 5};
  CHECK(mean_squared_error(x, y) == doctest::Approx(1.0).epsilon(1e-12));
}

static std::vector<UtteranceRecord> truth_fixture() {
  // A: two utts at 3.5; B: one utt at 2; C: three utts 1,3,5
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

TEST_CASE("system aggregate: hand fixture, lexicographic order") {
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
  REQUIRE(systems.size() == 3);
  CHECK(systems[0] == "A");
  CHECK(systems[1] == "B");
  CHECK(systems[2] == "C");
  CHECK(pm[0] == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(pm[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(pm[2] == doctest::Approx((1.5 + 2.5 + 4.4) / 3).epsilon(1e-12));
  CHECK(tm[0] == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(tm[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(tm[2] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("system aggregate: random sets match a group-by-mean oracle") {
  Lcg64 rng(23);
  std::vector<UtteranceRecord> truth;
  PredictionSet p;
  std::map<std::string, std::pair<double, int>> sum_pred, sum_true;
  for (int s = 0; s < 3; ++s) {
    for (int u = 0; u < 5; ++u) {
      UtteranceRecord r;
      r.utterance_id = "s" + std::to_string(s) + "u" + std::to_string(u);
      r.system_id = "sys" + std::to_string(s);
      r.audio_path = "x.wav";
      r.mos = 1 + 4 * rng.uniform();
      r.sample_rate = 16000;
      truth.push_back(r);
      double pred = 1 + 4 * rng.uniform();
      p.add(r.utterance_id, pred, r.system_id);
      sum_pred[r.system_id].first += pred;
      sum_pred[r.system_id].second++;
      sum_true[r.system_id].first += r.mos;
      sum_true[r.system_id].second++;
    }
  }
  std::vector<std::string> systems;
  std::vector<double> pm, tm;
  system_aggregate(p, truth, systems, pm, tm);
  REQUIRE(systems.size() == 3);
  for (size_t i = 0; i < systems.size(); ++i) {
    auto& sp = sum_pred[systems[i]];
    auto& st = sum_true[systems[i]];
    CHECK(std::fabs(pm[i] - sp.first / sp.second) <= 1e-12);
    CHECK(std::fabs(tm[i] - st.first / st.second) <= 1e-12);
  }
}

TEST_CASE("system aggregate: unknown prediction id and uncovered system") {
  auto truth = truth_fixture();
  PredictionSet p;
  p.add("zz", 3.0, "A");
  std::vector<std::string> systems;
  std::vector<double> pm, tm;
  CHECK_THROWS_AS(system_aggregate(p, truth, systems, pm, tm), Error);

  PredictionSet partial;  // covers A and B only
  partial.add("a1", 3.0, "A");
  partial.add("a2", 3.0, "A");
  partial.add("b1", 2.0, "B");
  CHECK_THROWS_AS(system_aggregate(partial, truth, systems, pm, tm), Error);
}

TEST_CASE("full report: perfect predictions") {
  auto truth = truth_fixture();
  PredictionSet p;
  for (const auto& r : truth) p.add(r.utterance_id, r.mos, r.system_id);
  MetricReport rep = full_report(p, truth);
  CHECK(rep.utterance.mse == 0.0);
  CHECK(rep.utterance.lcc.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.utterance.srcc.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.utterance.ktau.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.system.mse == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.system.srcc.value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("full report: single system hits the degenerate fallback") {
  std::vector<UtteranceRecord> truth;
  for (int i = 0; i < 4; ++i) {
    UtteranceRecord r;
    r.utterance_id = "u" + std::to_string(i);
    r.system_id = "only";
    r.audio_path = "x.wav";
    r.mos = 1.0 + i;
    r.sample_rate = 16000;
    truth.push_back(r);
  }
  PredictionSet p;
  for (const auto& r : truth) p.add(r.utterance_id, r.mos + 0.5, r.system_id);
  MetricReport rep = full_report(p, truth);
  CHECK(rep.system.srcc.degenerate);
  CHECK(rep.system.srcc.value == 0.0);
  CHECK(rep.system.lcc.degenerate);
  CHECK(rep.system.ktau.degenerate);
  CHECK(rep.system.mse == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_FALSE(rep.utterance.srcc.degenerate);
}

TEST_CASE("format report: flat keys with degenerate flags") {
  std::vector<UtteranceRecord> truth;
  for (int i = 0; i < 3; ++i) {
    UtteranceRecord r;
    r.utterance_id = "u" + std::to_string(i);
    r.system_id = "only";
    r.audio_path = "x.wav";
    r.mos = 1.0 + i;
    r.sample_rate = 16000;
    truth.push_back(r);
  }
  PredictionSet p;
  for (const auto& r : truth) p.add(r.utterance_id, r.mos, r.system_id);
  std::string text = format_report(full_report(p, truth));
  CHECK(text.find("utt.mse=") != std::string::npos);
  CHECK(text.find("utt.srcc=") != std::string::npos);
  CHECK(text.find("sys.ktau=") != std::string::npos);
  CHECK(text.find("sys.srcc.degenerate=1") != std::string::npos);
  CHECK(text.find("utt.srcc.degenerate") == std::string::npos);
}

TEST_CASE("correlations: length mismatch and short inputs rejected") {
  std::vector<double> x = {1, 2, 3};
  std::vector<double> y = {1, 2};
  CHECK_THROWS_AS(pearson(x, y), Error);
  std::vector<double> one = {1};
  Correlation c = pearson(one, one);
  CHECK(c.degenerate);  // too short for a correlation: flagged 0, not NaN
  CHECK(c.value == 0.0);
}
