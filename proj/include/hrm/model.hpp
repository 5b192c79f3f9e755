#ifndef HRM_MODEL_HPP
#define HRM_MODEL_HPP

#include <string>
#include <vector>

#include "hrm/common.hpp"
#include "hrm/encoders.hpp"
#include "hrm/features.hpp"

namespace hrm {

enum class Variant { M1, M2, M3 };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

// The seven ablation toggles of the component study.
struct ModelToggles {
  bool ssl = true;
  bool sr_emb = true;
  bool mel = true;
  bool multi_cnn = true;
  bool mfcc = false;
  bool cross_attn = false;
  bool blstm = true;
};

struct ModelDims {
  int d_enc = 64;
  int d_sr = 16;
  int f_mel = 80;
  int c_mfcc = 20;
  int cnn_channels = 32;   // per branch; three branches
  int attn_heads = 4;
  int blstm_hidden = 128;  // per direction
};

struct ModelConfig {
  Variant variant = Variant::M1;
  ModelToggles toggles;
  ModelDims dims;

  // Canonical toggles per variant: M1 = no cross-attention, no MFCC;
  // M2 = cross-attention; M3 = everything.
  static ModelConfig for_variant(Variant v, ModelDims dims = {});

  // Effective component activity. The CNN path needs the mel stream; the
  // cross-attention block needs both the query (ssl) and key/value (mel)
  // streams. Toggles without their inputs are inert and own no parameters.
  bool cnn_active() const { return toggles.mel && toggles.multi_cnn; }
  bool mel_proj_active() const { return toggles.mel && !toggles.multi_cnn; }
  bool attn_active() const {
    return toggles.cross_attn && toggles.ssl && toggles.mel;
  }
  int d_cnn() const { return 3 * dims.cnn_channels; }
  int fused_dim() const;
  int head_input_dim() const;

  // Throws unless at least one feature stream (ssl/mel/mfcc) is enabled and
  // the attention head count divides d_enc when attention is active.
  void validate() const;
};

// Non-owning handle into a model's parameter storage; the optimizer
// iterates these without knowing the layer structure.
struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
  Matrix* grad = nullptr;
  bool decay_exempt = false;  // biases and the rate-embedding table
};

struct LinearLayer {
  Matrix w, gw;  // [in x out]
  Matrix b, gb;  // [1 x out]
};

struct ConvBranch {
  int kernel = 3;
  Matrix w, gw;  // [channels x kernel*kernel]
  Matrix b, gb;  // [1 x channels]
};

struct LstmDirection {
  Matrix wx, gwx;  // [4H x in]
  Matrix wh, gwh;  // [4H x H]
  Matrix b, gb;    // [1 x 4H]
};

// Everything the backward pass needs from one forward call. Value type;
// one per utterance in a batch.
struct ForwardCache {
  int t = 0;
  int rate_id = -1;
  Matrix cnn_out;       // [T x d_cnn] (spectral stream, pre-attention)
  Matrix attn_q, attn_k, attn_v;  // [T x d_enc]
  std::vector<Matrix> attn_weights;  // per head, [T x T]
  Matrix attn_ctx;      // [T x d_enc], before the output projection
  Matrix fused;         // [T x fused_dim]
  // per direction: gates and states, each [T x H]
  Matrix lstm_i[2], lstm_f[2], lstm_g[2], lstm_o[2], lstm_c[2], lstm_h[2];
  std::vector<double> pooled;
  double score = 0.0;
};

class ScoreModel {
 public:
  ScoreModel(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }

  // Single-utterance forward; fills the cache for a later backward.
  double forward(const FeatureBundle& bundle, ForwardCache& cache) const;
  double forward(const FeatureBundle& bundle) const;

  // Accumulates parameter gradients for d(loss)/d(score) = dscore.
  void backward(const FeatureBundle& bundle, const ForwardCache& cache,
                double dscore);

  void zero_grad();
  std::vector<ParamRef> parameters();
  int64_t parameter_count() const;  // walk over all arrays

  const RateEmbeddingTable& rate_table() const { return rate_table_; }

  // Spectral convolution of one branch without pooling, for oracle tests:
  // returns [channels][T x F].
  std::vector<Matrix> conv_branch_maps(int branch, const Matrix& input) const;

  void save_checkpoint(const std::string& path, uint64_t feature_hash,
                       uint64_t train_step) const;
  // Fails loudly on magic/config/shape mismatch.
  static ScoreModel load_checkpoint(const std::string& path,
                                    uint64_t* feature_hash_out = nullptr,
                                    uint64_t* train_step_out = nullptr);

 private:
  void check_bundle(const FeatureBundle& bundle) const;
  Matrix run_cnn(const Matrix& mel, ForwardCache& cache) const;
  Matrix run_attention(const Matrix& xq, const Matrix& xkv,
                       ForwardCache& cache) const;
  void run_blstm(const Matrix& input, ForwardCache& cache) const;

  ModelConfig cfg_;
  uint64_t seed_ = 0;

  RateEmbeddingTable rate_table_;           // when sr_emb
  std::vector<ConvBranch> cnn_;             // kernels 3/5/7 when cnn_active
  LinearLayer mel_proj_;                    // when mel_proj_active
  LinearLayer attn_wq_, attn_wk_, attn_wv_, attn_wo_;  // when attn_active
  LstmDirection lstm_[2];                   // fwd/bwd when blstm
  LinearLayer head_;
};

// Closed-form parameter count from the config alone:
//   sr_emb:    3 * d_sr
//   multi-CNN: sum over k in {3,5,7} of ch*k*k + ch
//   mel proj:  f_mel * d_cnn + d_cnn           (CNN ablated, mel kept)
//   attention: (d_enc + 2*d_cnn + d_enc) * d_enc + 4*d_enc
//   BLSTM:     2 * (4H*fused + 4H*H + 4H)
//   head:      head_in + 1
int64_t parameter_count(const ModelConfig& cfg);

// ModelConfig <-> flat key=value text (used inside checkpoints).
std::string model_config_to_text(const ModelConfig& cfg);
ModelConfig model_config_from_text(const std::string& text);

}  // namespace hrm

#endif  // HRM_MODEL_HPP
