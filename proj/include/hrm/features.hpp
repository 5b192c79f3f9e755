#ifndef HRM_FEATURES_HPP
#define HRM_FEATURES_HPP

#include <string>

#include "hrm/common.hpp"
#include "hrm/data.hpp"

namespace hrm {

class FrameEncoder;

struct FeatureConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_mel = 80;
  int n_mfcc = 20;
  double log_floor = 1e-10;  // added before log()

  // FNV-1a over the serialized fields; used to key feature caches and to
  // refuse predicting with a checkpoint built from other features.
  uint64_t hash() const;
};

struct MelSpectrogram {
  Matrix frames;         // [T_mel x n_mel], log power
  double frame_hop_s = 0.0;
  int sample_rate = 0;
};

struct MfccFrames {
  Matrix frames;  // [T_mel x C]
};

struct FeatureBundle {
  Matrix encoder_frames;  // [T x D_enc]
  Matrix mel_aligned;     // [T x n_mel]
  Matrix mfcc_aligned;    // [T x n_mfcc]
  int rate_id = -1;       // 0/1/2 for 16/24/48 kHz
};

// Frames of length window_ms at the wave's native rate, hop hop_ms, Hann
// window, power spectrum through an n_mel triangular filterbank spanning
// 0..Nyquist, then log(power + floor). No padding: T = 1 + (n - win) / hop.
MelSpectrogram mel_spectrogram(const Waveform& wave, const FeatureConfig& cfg);

// Orthonormal DCT-II over each log-mel frame, coefficients 0..C-1.
MfccFrames mfcc(const MelSpectrogram& mel, int n_coeff);

// Linear interpolation along time on normalized positions t/(T-1);
// endpoints map exactly.
Matrix align_to(const Matrix& frames, int target_len);

FeatureBundle build_bundle(const Waveform& wave, const FrameEncoder& encoder,
                           const FeatureConfig& cfg);

// Per-utterance binary cache. Load returns false when the file is absent
// or carries a different config hash.
void save_bundle(const FeatureBundle& bundle, uint64_t config_hash,
                 const std::string& path);
bool load_bundle(const std::string& path, uint64_t config_hash,
                 FeatureBundle& out);

// Mel filterbank construction, exposed so tests can locate band edges.
// Returns [n_mel x (n_fft/2 + 1)] triangle weights.
Matrix mel_filterbank(int n_mel, int n_fft, int sample_rate);

}  // namespace hrm

#endif  // HRM_FEATURES_HPP
