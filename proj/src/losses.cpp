#include "hrm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hrm {

namespace {

constexpr double kRankEps = 1e-8;

void check_batch(const Batch& b, size_t min_size, const char* what) {
  require(b.preds.size() == b.labels.size(), ErrorCode::Shape,
          std::string(what) + ": preds/labels length mismatch");
  require(b.size() >= min_size, ErrorCode::Validation,
          std::string(what) + ": batch size " + std::to_string(b.size()) +
              " below minimum " + std::to_string(min_size));
}

struct Moments {
  double mean_p, mean_y, var_p, var_y, cov;  // population (divide by B)
};

Moments moments(const Batch& b) {
  const size_t n = b.size();
  Moments m{0, 0, 0, 0, 0};
  for (size_t i = 0; i < n; ++i) {
    m.mean_p += b.preds[i];
    m.mean_y += b.labels[i];
  }
  m.mean_p /= n;
  m.mean_y /= n;
  for (size_t i = 0; i < n; ++i) {
    double dp = b.preds[i] - m.mean_p;
    double dy = b.labels[i] - m.mean_y;
    m.var_p += dp * dp;
    m.var_y += dy * dy;
    m.cov += dp * dy;
  }
  m.var_p /= n;
  m.var_y /= n;
  m.cov /= n;
  return m;
}

// Batch extremes for RelRank: argmax, second-max, second-min, argmin,
// chosen in that order, ties and overlaps resolved toward lower indices.
struct Extremes {
  size_t s1, s2, s3, s4;
};

Extremes rel_rank_extremes(const std::vector<double>& y) {
  const size_t n = y.size();
  std::vector<bool> used(n, false);
  auto pick = [&](bool want_max) {
    size_t best = n;
    for (size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      if (best == n || (want_max ? y[i] > y[best] : y[i] < y[best])) best = i;
    }
    used[best] = true;
    return best;
  };
  Extremes e{};
  e.s1 = pick(true);
  e.s2 = pick(true);
  e.s4 = pick(false);
  e.s3 = pick(false);
  return e;
}

}  // namespace

LossName loss_from_string(const std::string& name) {
  if (name == "mse") return LossName::Mse;
  if (name == "mae") return LossName::Mae;
  if (name == "contrastive") return LossName::Contrastive;
  if (name == "relrank") return LossName::RelRank;
  if (name == "lcc") return LossName::Lcc;
  if (name == "ccc") return LossName::Ccc;
  if (name == "dcq") return LossName::Dcq;
  if (name == "utmos") return LossName::Utmos;
  throw Error(ErrorCode::Config, "unknown loss '" + name + "'");
}

std::string loss_to_string(LossName name) {
  switch (name) {
    case LossName::Mse: return "mse";
    case LossName::Mae: return "mae";
    case LossName::Contrastive: return "contrastive";
    case LossName::RelRank: return "relrank";
    case LossName::Lcc: return "lcc";
    case LossName::Ccc: return "ccc";
    case LossName::Dcq: return "dcq";
    case LossName::Utmos: return "utmos";
  }
  return "?";
}

std::vector<LossName> all_losses() {
  return {LossName::Mse,  LossName::Mae, LossName::Contrastive,
          LossName::RelRank, LossName::Lcc, LossName::Ccc,
          LossName::Dcq,  LossName::Utmos};
}

size_t min_batch_size(LossName name) {
  switch (name) {
    case LossName::Mse:
    case LossName::Mae:
      return 1;
    case LossName::RelRank:
      return 4;
    default:
      return 2;
  }
}

double mse(const Batch& b) {
  check_batch(b, 1, "mse");
  double acc = 0.0;
  for (size_t i = 0; i < b.size(); ++i) {
    double e = b.preds[i] - b.labels[i];
    acc += e * e;
  }
  return acc / b.size();
}

double mae(const Batch& b) {
  check_batch(b, 1, "mae");
  double acc = 0.0;
  for (size_t i = 0; i < b.size(); ++i) acc += std::fabs(b.preds[i] - b.labels[i]);
  return acc / b.size();
}

double contrastive(const Batch& b, double margin) {
  check_batch(b, 2, "contrastive");
  const size_t n = b.size();
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      double d = (b.preds[i] - b.preds[j]) - (b.labels[i] - b.labels[j]);
      acc += std::max(0.0, std::fabs(d) - margin);
    }
  }
  return acc / (n * (n - 1) / 2);
}

double rel_rank(const Batch& b, double margin) {
  check_batch(b, 4, "rel_rank");
  Extremes e = rel_rank_extremes(b.labels);
  const auto& y = b.labels;
  const auto& p = b.preds;
  double span = y[e.s1] - y[e.s4] + kRankEps;
  double hi = std::max(0.0, p[e.s2] - p[e.s1] + margin * (y[e.s1] - y[e.s2]) / span);
  double lo = std::max(0.0, p[e.s4] - p[e.s3] + margin * (y[e.s3] - y[e.s4]) / span);
  return hi + lo;
}

double lcc_loss(const Batch& b) {
  check_batch(b, 2, "lcc_loss");
  Moments m = moments(b);
  if (m.var_p <= 0.0 || m.var_y <= 0.0) return 1.0;  // degenerate fallback
  return 1.0 - m.cov / (std::sqrt(m.var_p) * std::sqrt(m.var_y));
}

double ccc_loss(const Batch& b) {
  check_batch(b, 2, "ccc_loss");
  Moments m = moments(b);
  double dmean = m.mean_p - m.mean_y;
  double denom = m.var_p + m.var_y + dmean * dmean;
  if (denom <= 0.0) return 1.0;  // identical constants
  double cov = (m.var_p <= 0.0 || m.var_y <= 0.0) ? 0.0 : m.cov;
  return 1.0 - 2.0 * cov / denom;
}

double dcq_loss(const Batch& b, double weight, double margin) {
  check_batch(b, 2, "dcq_loss");
  const size_t n = b.size();
  double rank_acc = 0.0;
  size_t pairs = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (b.labels[i] > b.labels[j]) {
        rank_acc += std::max(0.0, -(b.preds[i] - b.preds[j]) + margin);
        ++pairs;
      }
    }
  }
  double rank = pairs > 0 ? rank_acc / pairs : 0.0;
  return mse(b) + weight * rank;
}

double utmos_loss(const Batch& b, double margin_contrastive) {
  check_batch(b, 2, "utmos_loss");
  const double tau = LossConfig::tau_clip;
  double clipped = 0.0;
  for (size_t i = 0; i < b.size(); ++i) {
    double e = b.preds[i] - b.labels[i];
    if (std::fabs(e) > tau) clipped += e * e;
  }
  clipped /= b.size();
  return clipped + 0.5 * contrastive(b, margin_contrastive);
}

double evaluate_loss(const LossConfig& cfg, const Batch& b) {
  switch (cfg.name) {
    case LossName::Mse: return mse(b);
    case LossName::Mae: return mae(b);
    case LossName::Contrastive: return contrastive(b, cfg.margin_contrastive);
    case LossName::RelRank: return rel_rank(b, cfg.margin_rank);
    case LossName::Lcc: return lcc_loss(b);
    case LossName::Ccc: return ccc_loss(b);
    case LossName::Dcq: return dcq_loss(b, cfg.dcq_weight, cfg.margin_rank);
    case LossName::Utmos: return utmos_loss(b, cfg.margin_contrastive);
  }
  throw Error(ErrorCode::Config, "unknown loss");
}

std::vector<double> loss_gradient(const LossConfig& cfg, const Batch& b) {
  check_batch(b, min_batch_size(cfg.name), "loss_gradient");
  const size_t n = b.size();
  std::vector<double> g(n, 0.0);

  switch (cfg.name) {
    case LossName::Mse: {
      for (size_t i = 0; i < n; ++i)
        g[i] = 2.0 * (b.preds[i] - b.labels[i]) / n;
      break;
    }
    case LossName::Mae: {
      for (size_t i = 0; i < n; ++i) {
        double e = b.preds[i] - b.labels[i];
        g[i] = (e > 0 ? 1.0 : (e < 0 ? -1.0 : 0.0)) / n;
      }
      break;
    }
    case LossName::Contrastive: {
      const double np = n * (n - 1) / 2.0;
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
          double d = (b.preds[i] - b.preds[j]) - (b.labels[i] - b.labels[j]);
          if (std::fabs(d) > cfg.margin_contrastive) {
            double s = (d > 0 ? 1.0 : -1.0) / np;
            g[i] += s;
            g[j] -= s;
          }
        }
      }
      break;
    }
    case LossName::RelRank: {
      Extremes e = rel_rank_extremes(b.labels);
      const auto& y = b.labels;
      const auto& p = b.preds;
      double span = y[e.s1] - y[e.s4] + kRankEps;
      if (p[e.s2] - p[e.s1] + cfg.margin_rank * (y[e.s1] - y[e.s2]) / span > 0) {
        g[e.s2] += 1.0;
        g[e.s1] -= 1.0;
      }
      if (p[e.s4] - p[e.s3] + cfg.margin_rank * (y[e.s3] - y[e.s4]) / span > 0) {
        g[e.s4] += 1.0;
        g[e.s3] -= 1.0;
      }
      break;
    }
    case LossName::Lcc: {
      Moments m = moments(b);
      if (m.var_p <= 0.0 || m.var_y <= 0.0) break;  // flat fallback region
      double sp = std::sqrt(m.var_p), sy = std::sqrt(m.var_y);
      double rho = m.cov / (sp * sy);
      for (size_t i = 0; i < n; ++i) {
        double dp = b.preds[i] - m.mean_p;
        double dy = b.labels[i] - m.mean_y;
        g[i] = -(dy / (sp * sy) - rho * dp / m.var_p) / n;
      }
      break;
    }
    case LossName::Ccc: {
      Moments m = moments(b);
      double dmean = m.mean_p - m.mean_y;
      double denom = m.var_p + m.var_y + dmean * dmean;
      if (denom <= 0.0 || m.var_p <= 0.0 || m.var_y <= 0.0) break;
      for (size_t i = 0; i < n; ++i) {
        double dp = b.preds[i] - m.mean_p;
        double dy = b.labels[i] - m.mean_y;
        double dcov = dy / n;
        double ddenom = (2.0 * dp + 2.0 * dmean) / n;
        double dccc = (2.0 * dcov * denom - 2.0 * m.cov * ddenom) / (denom * denom);
        g[i] = -dccc;
      }
      break;
    }
    case LossName::Dcq: {
      for (size_t i = 0; i < n; ++i)
        g[i] = 2.0 * (b.preds[i] - b.labels[i]) / n;
      size_t pairs = 0;
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
          if (b.labels[i] > b.labels[j]) ++pairs;
      if (pairs > 0) {
        double w = cfg.dcq_weight / pairs;
        for (size_t i = 0; i < n; ++i) {
          for (size_t j = 0; j < n; ++j) {
            if (b.labels[i] > b.labels[j] &&
                -(b.preds[i] - b.preds[j]) + cfg.margin_rank > 0) {
              g[i] -= w;
              g[j] += w;
            }
          }
        }
      }
      break;
    }
    case LossName::Utmos: {
      const double tau = LossConfig::tau_clip;
      for (size_t i = 0; i < n; ++i) {
        double e = b.preds[i] - b.labels[i];
        if (std::fabs(e) > tau) g[i] = 2.0 * e / n;
      }
      const double np = n * (n - 1) / 2.0;
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
          double d = (b.preds[i] - b.preds[j]) - (b.labels[i] - b.labels[j]);
          if (std::fabs(d) > cfg.margin_contrastive) {
            double s = 0.5 * (d > 0 ? 1.0 : -1.0) / np;
            g[i] += s;
            g[j] -= s;
          }
        }
      }
      break;
    }
  }
  return g;
}

}  // namespace hrm
