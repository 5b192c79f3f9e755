#ifndef HRM_METRICS_HPP
#define HRM_METRICS_HPP

#include <string>
#include <vector>

#include "hrm/common.hpp"
#include "hrm/data.hpp"

namespace hrm {

// Correlation value plus a degeneracy flag. Zero-variance (or otherwise
// undefined) inputs yield value 0 with degenerate=true, never NaN.
struct Correlation {
  double value = 0.0;
  bool degenerate = false;
};

struct LevelMetrics {
  double mse = 0.0;
  Correlation lcc;
  Correlation srcc;
  Correlation ktau;
};

struct MetricReport {
  LevelMetrics utterance;
  LevelMetrics system;
};

// Population-moment Pearson correlation.
Correlation pearson(const std::vector<double>& x, const std::vector<double>& y);

// Spearman: Pearson over mid-ranks (ties get the average rank).
Correlation spearman(const std::vector<double>& x, const std::vector<double>& y);

// Kendall tau-b with tie correction, computed by sort + merge counting.
Correlation kendall_tau(const std::vector<double>& x, const std::vector<double>& y);

std::vector<double> midranks(const std::vector<double>& x);

double mean_squared_error(const std::vector<double>& x, const std::vector<double>& y);

// Per-system means of predictions and true MOS, systems in lexicographic
// order. Every prediction id must exist in truth and every truth system
// must be covered by predictions.
void system_aggregate(const PredictionSet& preds,
                      const std::vector<UtteranceRecord>& truth,
                      std::vector<std::string>& systems,
                      std::vector<double>& sys_pred_means,
                      std::vector<double>& sys_true_means);

MetricReport full_report(const PredictionSet& preds,
                         const std::vector<UtteranceRecord>& truth);

// Flat key-value block: utt.mse=..., sys.srcc=..., one per line, with
// *.degenerate flags where a correlation hit the zero-variance fallback.
std::string format_report(const MetricReport& report);

}  // namespace hrm

#endif  // HRM_METRICS_HPP
