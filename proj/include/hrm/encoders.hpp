#ifndef HRM_ENCODERS_HPP
#define HRM_ENCODERS_HPP

#include <memory>
#include <string>

#include "hrm/common.hpp"
#include "hrm/data.hpp"

namespace hrm {

// Frame-level encoder seam. Consumes raw samples at face value regardless
// of the declared rate, so 48 kHz audio yields ~3x the frames of the same
// content at 16 kHz.
class FrameEncoder {
 public:
  virtual ~FrameEncoder() = default;

  virtual int output_dim() const = 0;
  virtual int frame_hop_samples() const = 0;
  virtual int receptive_window_samples() const = 0;

  // [T x output_dim], T = 1 + floor((n - window) / hop). Throws on n < window.
  virtual Matrix encode(const Waveform& wave) const = 0;

  int frame_count(size_t n_samples) const;
};

// Deterministic stand-in for a pretrained SSL encoder: a fixed random
// projection of each strided raw-sample frame followed by tanh. The
// projection is generated by the 64-bit LCG mapped to uniform
// [-0.05, 0.05], so the same seed reproduces it bit-exactly anywhere.
class ToyEncoder : public FrameEncoder {
 public:
  explicit ToyEncoder(int output_dim = 64, uint64_t seed = 0,
                      int window = 400, int hop = 320);

  int output_dim() const override { return projection_.cols; }
  int frame_hop_samples() const override { return hop_; }
  int receptive_window_samples() const override { return window_; }
  Matrix encode(const Waveform& wave) const override;

  const Matrix& projection() const { return projection_; }

 private:
  Matrix projection_;  // [window x output_dim]
  int window_;
  int hop_;
};

// Boundary for external pretrained encoders (wav2vec 2.0 class models).
// Loads a shared object exporting the C frame-encoder contract declared in
// highratemos.h (hrm_ext_encoder_info / hrm_ext_encoder_encode). Missing
// library or symbols raise an unavailable error; there is no silent
// fallback to the toy encoder.
class ExternalEncoderAdapter : public FrameEncoder {
 public:
  explicit ExternalEncoderAdapter(const std::string& library_path);
  ~ExternalEncoderAdapter() override;

  int output_dim() const override { return output_dim_; }
  int frame_hop_samples() const override { return hop_; }
  int receptive_window_samples() const override { return window_; }
  Matrix encode(const Waveform& wave) const override;

 private:
  void* handle_ = nullptr;
  void* encode_fn_ = nullptr;
  int output_dim_ = 0;
  int hop_ = 0;
  int window_ = 0;
};

// Learnable per-rate embedding. Rows: 0 -> 16 kHz, 1 -> 24 kHz, 2 -> 48 kHz.
// Initialized uniform [-0.1, 0.1] from the seed.
struct RateEmbeddingTable {
  Matrix vectors;  // [3 x dim]
  Matrix grad;     // same shape, accumulated by training

  RateEmbeddingTable() = default;
  RateEmbeddingTable(int dim, uint64_t seed);

  int dim() const { return vectors.cols; }
  // Returns a view-copy of row rate_id; throws on out-of-range id.
  std::vector<double> embed(int rate_id) const;
  void accumulate_grad(int rate_id, const double* g);
};

}  // namespace hrm

#endif  // HRM_ENCODERS_HPP
