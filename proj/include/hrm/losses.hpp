#ifndef HRM_LOSSES_HPP
#define HRM_LOSSES_HPP

#include <string>
#include <vector>

#include "hrm/common.hpp"

namespace hrm {

enum class LossName {
  Mse,
  Mae,
  Contrastive,
  RelRank,
  Lcc,
  Ccc,
  Dcq,
  Utmos,
};

LossName loss_from_string(const std::string& name);
std::string loss_to_string(LossName name);
std::vector<LossName> all_losses();

struct LossConfig {
  LossName name = LossName::Mse;
  double margin_contrastive = 0.1;
  double margin_rank = 0.5;
  double dcq_weight = 1.0;
  static constexpr double tau_clip = 0.25;  // UTMOS clipping parameter
};

struct Batch {
  std::vector<double> preds;
  std::vector<double> labels;

  size_t size() const { return preds.size(); }
};

double mse(const Batch& b);
double mae(const Batch& b);
// Mean over unordered pairs of max(0, |dpred - dlabel| - margin).
double contrastive(const Batch& b, double margin);
// Two hinge terms on the batch extremes, margins scaled by label gaps.
double rel_rank(const Batch& b, double margin);
// 1 - Pearson (population moments). Zero variance in either vector -> 1.
double lcc_loss(const Batch& b);
// 1 - concordance correlation. Zero variance handled as cov term = 0.
double ccc_loss(const Batch& b);
// mse + weight * mean over ordered pairs (y_i > y_j) of hinge on prediction order.
double dcq_loss(const Batch& b, double weight, double margin);
// clipped MSE (errors with |e| <= 0.25 contribute zero) + 0.5 * contrastive.
double utmos_loss(const Batch& b, double margin_contrastive);

double evaluate_loss(const LossConfig& cfg, const Batch& b);

// Analytic d(loss)/d(preds). Subgradient 0 at hinge kinks and the clip
// boundary.
std::vector<double> loss_gradient(const LossConfig& cfg, const Batch& b);

// Minimum batch size at which the loss is defined (RelRank needs 4,
// pairwise/correlation losses need 2).
size_t min_batch_size(LossName name);

}  // namespace hrm

#endif  // HRM_LOSSES_HPP
