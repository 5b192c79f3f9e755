#include "hrm/ensemble.hpp"

#include <algorithm>

namespace hrm {

PredictionSet average(const std::vector<PredictionSet>& sets) {
  require(!sets.empty(), ErrorCode::Validation, "average: no prediction sets");
  const PredictionSet& first = sets[0];
  for (size_t s = 1; s < sets.size(); ++s) {
    if (sets[s].entries.size() == first.entries.size()) {
      bool same = std::equal(
          first.entries.begin(), first.entries.end(), sets[s].entries.begin(),
          [](const auto& a, const auto& b) { return a.first == b.first; });
      if (same) continue;
    }
    std::string only_first, only_other;
    for (const auto& [id, v] : first.entries) {
      (void)v;
      if (!sets[s].entries.count(id))
        only_first += (only_first.empty() ? "" : ", ") + id;
    }
    for (const auto& [id, v] : sets[s].entries) {
      (void)v;
      if (!first.entries.count(id))
        only_other += (only_other.empty() ? "" : ", ") + id;
    }
    throw Error(ErrorCode::Validation,
                "prediction sets disagree on utterance ids; only in set 0: [" +
                    only_first + "], only in set " + std::to_string(s) + ": [" +
                    only_other + "]");
  }

  PredictionSet out;
  for (const auto& [id, score] : first.entries) {
    double acc = score;
    for (size_t s = 1; s < sets.size(); ++s) acc += sets[s].entries.at(id);
    auto sys = first.system_of.find(id);
    out.add(id, acc / sets.size(),
            sys == first.system_of.end() ? "" : sys->second);
  }
  return out;
}

namespace {

const PredictionSet& standard_of(const VariantPredictions& v, const char* name) {
  require(v.has_standard, ErrorCode::Validation,
          std::string("missing source (") + name + ", standard_training)");
  return v.standard;
}

PredictionSet five_fold_average(const VariantPredictions& v, const char* name) {
  require(!v.fold_sets.empty(), ErrorCode::Validation,
          std::string("missing source (") + name + ", five_fold_average)");
  return average(v.fold_sets);
}

const PredictionSet& best_of_fold(const VariantPredictions& v, const char* name) {
  require(!v.fold_sets.empty() && v.fold_sets.size() == v.fold_dev_srcc.size(),
          ErrorCode::Validation,
          std::string("missing source (") + name +
              ", best_of_five_fold): need fold sets with dev SRCCs");
  size_t best = 0;
  for (size_t f = 1; f < v.fold_dev_srcc.size(); ++f) {
    if (v.fold_dev_srcc[f] > v.fold_dev_srcc[best]) best = f;
  }
  return v.fold_sets[best];
}

}  // namespace

std::vector<std::string> ensemble_spec_names() {
  return {"setting1", "setting2", "setting3", "setting4", "highratemos"};
}

PredictionSet build_ensemble(const std::string& spec_name,
                             const VariantPredictions& m1,
                             const VariantPredictions& m2,
                             const VariantPredictions& m3) {
  std::vector<PredictionSet> members;
  if (spec_name == "setting1") {
    members = {five_fold_average(m1, "M1"), standard_of(m2, "M2"),
               standard_of(m3, "M3")};
  } else if (spec_name == "setting2") {
    members = {five_fold_average(m1, "M1"), five_fold_average(m2, "M2"),
               five_fold_average(m3, "M3")};
  } else if (spec_name == "setting3") {
    members = {standard_of(m1, "M1"), standard_of(m2, "M2"),
               standard_of(m3, "M3")};
  } else if (spec_name == "setting4") {
    members = {best_of_fold(m1, "M1"), best_of_fold(m2, "M2"),
               best_of_fold(m3, "M3")};
  } else if (spec_name == "highratemos") {
    members = {best_of_fold(m1, "M1"), standard_of(m2, "M2"),
               standard_of(m3, "M3")};
  } else {
    throw Error(ErrorCode::Config, "unknown ensemble spec '" + spec_name + "'");
  }
  return average(members);
}

}  // namespace hrm
