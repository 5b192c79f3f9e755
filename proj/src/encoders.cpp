#include "hrm/encoders.hpp"

#include <dlfcn.h>

#include <cmath>

#include "highratemos.h"

namespace hrm {

int FrameEncoder::frame_count(size_t n_samples) const {
  const int win = receptive_window_samples();
  require(static_cast<long>(n_samples) >= win, ErrorCode::Validation,
          "input shorter than encoder window (" + std::to_string(n_samples) +
              " < " + std::to_string(win) + " samples)");
  return 1 + static_cast<int>((n_samples - win) / frame_hop_samples());
}

ToyEncoder::ToyEncoder(int output_dim, uint64_t seed, int window, int hop)
    : window_(window), hop_(hop) {
  require(output_dim >= 1 && window >= 1 && hop >= 1, ErrorCode::Config,
          "toy encoder dimensions must be positive");
  projection_ = Matrix(window, output_dim);
  Lcg64 rng(seed ^ 0x7f4a7c15ULL);
  for (double& w : projection_.v) w = rng.uniform_sym(0.05);
}

Matrix ToyEncoder::encode(const Waveform& wave) const {
  const int t_out = frame_count(wave.samples.size());
  Matrix out(t_out, projection_.cols);
  for (int t = 0; t < t_out; ++t) {
    const double* s = wave.samples.data() + static_cast<size_t>(t) * hop_;
    for (int d = 0; d < projection_.cols; ++d) {
      double acc = 0.0;
      for (int i = 0; i < window_; ++i) acc += s[i] * projection_.at(i, d);
      out.at(t, d) = std::tanh(acc);
    }
  }
  return out;
}

ExternalEncoderAdapter::ExternalEncoderAdapter(const std::string& library_path) {
  handle_ = dlopen(library_path.c_str(), RTLD_NOW | RTLD_LOCAL);
  require(handle_ != nullptr, ErrorCode::Unavailable,
          "external encoder unavailable: cannot load '" + library_path + "'");

  using InfoFn = int (*)(hrm_ext_encoder_info*);
  auto info_fn = reinterpret_cast<InfoFn>(dlsym(handle_, "hrm_ext_encoder_get_info"));
  encode_fn_ = dlsym(handle_, "hrm_ext_encoder_encode");
  if (info_fn == nullptr || encode_fn_ == nullptr) {
    dlclose(handle_);
    handle_ = nullptr;
    throw Error(ErrorCode::Unavailable,
                "external encoder unavailable: '" + library_path +
                    "' does not export the frame-encoder contract");
  }
  hrm_ext_encoder_info info{};
  if (info_fn(&info) != 0 || info.output_dim < 1 || info.frame_hop_samples < 1 ||
      info.receptive_window_samples < 1) {
    dlclose(handle_);
    handle_ = nullptr;
    throw Error(ErrorCode::Unavailable,
                "external encoder unavailable: bad info from '" + library_path + "'");
  }
  output_dim_ = info.output_dim;
  hop_ = info.frame_hop_samples;
  window_ = info.receptive_window_samples;
}

ExternalEncoderAdapter::~ExternalEncoderAdapter() {
  if (handle_ != nullptr) dlclose(handle_);
}

Matrix ExternalEncoderAdapter::encode(const Waveform& wave) const {
  const int t_out = frame_count(wave.samples.size());
  Matrix out(t_out, output_dim_);
  using EncodeFn = int (*)(const double*, long, int, double*, long*);
  auto fn = reinterpret_cast<EncodeFn>(encode_fn_);
  long t_written = 0;
  int rc = fn(wave.samples.data(), static_cast<long>(wave.samples.size()),
              wave.sample_rate, out.v.data(), &t_written);
  require(rc == 0, ErrorCode::Unavailable,
          "external encoder failed with code " + std::to_string(rc));
  require(t_written == t_out, ErrorCode::Shape,
          "external encoder frame count " + std::to_string(t_written) +
              " does not match advertised hop/window (expected " +
              std::to_string(t_out) + ")");
  return out;
}

RateEmbeddingTable::RateEmbeddingTable(int dim, uint64_t seed) {
  require(dim >= 1, ErrorCode::Config, "rate embedding dim must be positive");
  vectors = Matrix(3, dim);
  grad = Matrix(3, dim);
  Lcg64 rng(seed);
  for (double& w : vectors.v) w = rng.uniform_sym(0.1);
}

std::vector<double> RateEmbeddingTable::embed(int rate_id) const {
  require(rate_id >= 0 && rate_id < 3, ErrorCode::Validation,
          "rate_id " + std::to_string(rate_id) + " out of range [0,2]");
  return std::vector<double>(vectors.row(rate_id), vectors.row(rate_id) + dim());
}

void RateEmbeddingTable::accumulate_grad(int rate_id, const double* g) {
  require(rate_id >= 0 && rate_id < 3, ErrorCode::Validation, "rate_id out of range");
  for (int i = 0; i < dim(); ++i) grad.at(rate_id, i) += g[i];
}

}  // namespace hrm
