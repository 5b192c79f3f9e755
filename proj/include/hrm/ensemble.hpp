#ifndef HRM_ENSEMBLE_HPP
#define HRM_ENSEMBLE_HPP

#include <string>
#include <vector>

#include "hrm/data.hpp"

namespace hrm {

enum class EnsembleSource { FiveFoldAverage, BestOfFiveFold, StandardTraining };

// Per model variant: the five fold prediction sets with their dev SRCCs,
// and/or the standard-training prediction set. Only what the chosen
// setting needs has to be present.
struct VariantPredictions {
  std::vector<PredictionSet> fold_sets;
  std::vector<double> fold_dev_srcc;
  PredictionSet standard;
  bool has_standard = false;
};

// Equal-weight per-id mean. All sets must cover the same id set; the error
// lists the symmetric difference otherwise.
PredictionSet average(const std::vector<PredictionSet>& sets);

// The five prediction-combination settings:
//   setting1:    M1 five-fold average + M2 std + M3 std
//   setting2:    all three five-fold average
//   setting3:    all three standard training
//   setting4:    all three best-of-five-fold
//   highratemos: M1 best-of-five-fold + M2 std + M3 std
// Best-of-five-fold = the fold with the highest dev SRCC, ties toward the
// lowest fold index.
PredictionSet build_ensemble(const std::string& spec_name,
                             const VariantPredictions& m1,
                             const VariantPredictions& m2,
                             const VariantPredictions& m3);

std::vector<std::string> ensemble_spec_names();

}  // namespace hrm

#endif  // HRM_ENSEMBLE_HPP
