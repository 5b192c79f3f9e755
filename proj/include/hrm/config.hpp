#ifndef HRM_CONFIG_HPP
#define HRM_CONFIG_HPP

#include <map>
#include <string>

#include "hrm/features.hpp"
#include "hrm/model.hpp"
#include "hrm/training.hpp"

namespace hrm {

// Flat key=value run configuration. Unknown keys are rejected; every run
// emits the fully resolved document (defaults materialized) so a run can
// be reproduced from its own output.
struct RunConfig {
  FeatureConfig features;
  TrainConfig train;  // carries LossConfig and ModelConfig
  int cv_folds = 5;

  // toy encoder settings (the external seam is selected via encoder.kind)
  std::string encoder_kind = "toy";   // "toy" | "external"
  std::string encoder_library;        // shared object for "external"
  int encoder_dim = 64;
  int encoder_window = 400;
  int encoder_hop = 320;
  bool encoder_freeze = true;

  static RunConfig defaults();
  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);

  // Applies `key=value`; throws a Config error naming unknown keys.
  void set(const std::string& key, const std::string& value);

  std::string to_text() const;
  void write(const std::string& path) const;

  std::unique_ptr<FrameEncoder> make_encoder() const;
};

// Table-4 style ablation: flips one component toggle off. Component names:
// ssl, sr_emb, mel, multi_cnn, mfcc, cross_attn, blstm.
void ablate_component(RunConfig& cfg, const std::string& component);

}  // namespace hrm

#endif  // HRM_CONFIG_HPP
