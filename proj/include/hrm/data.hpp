#ifndef HRM_DATA_HPP
#define HRM_DATA_HPP

#include <map>
#include <string>
#include <vector>

#include "hrm/common.hpp"

namespace hrm {

constexpr int kSupportedRates[3] = {16000, 24000, 48000};

inline bool is_supported_rate(int rate) {
  return rate == 16000 || rate == 24000 || rate == 48000;
}

// 16000 -> 0, 24000 -> 1, 48000 -> 2
int rate_id_of(int sample_rate);

struct UtteranceRecord {
  std::string utterance_id;
  std::string audio_path;
  std::string system_id;
  double mos = 0.0;          // in [1, 5]
  int sample_rate = 0;       // one of kSupportedRates
  int fold = -1;             // -1 = unassigned
};

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 0;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Predicted score per utterance plus the system grouping needed for
// system-level metrics. Ordered maps keep file output deterministic.
struct PredictionSet {
  std::map<std::string, double> entries;       // utterance_id -> score
  std::map<std::string, std::string> system_of;  // utterance_id -> system_id

  void add(const std::string& id, double score, const std::string& system);
  bool empty() const { return entries.empty(); }
  size_t size() const { return entries.size(); }
};

// CSV manifest: utterance_id,audio_path,system_id,mos,sample_rate[,fold]
std::vector<UtteranceRecord> load_manifest(const std::string& path);
void write_manifest(const std::vector<UtteranceRecord>& records,
                    const std::string& path);

// RIFF/WAVE, PCM16, mono only. Samples divided by 32768; never resampled.
Waveform load_waveform(const std::string& path);
void write_waveform(const Waveform& wave, const std::string& path);

// Assigns folds in place. Groups by system_id when the number of distinct
// systems is >= k; otherwise falls back to an ungrouped split (warning via
// return value false).
bool kfold_split(std::vector<UtteranceRecord>& records, int k, uint64_t seed);

// TSV `utterance_id<TAB>score<TAB>system_id`, scores with 9 decimals.
void write_predictions(const PredictionSet& preds, const std::string& path);
PredictionSet read_predictions(const std::string& path);

}  // namespace hrm

#endif  // HRM_DATA_HPP
