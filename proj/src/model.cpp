#include "hrm/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace hrm {

namespace {

constexpr int kKernels[3] = {3, 5, 7};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void init_uniform(Matrix& m, Lcg64& rng, double half_width) {
  for (double& w : m.v) w = rng.uniform_sym(half_width);
}

void init_linear(LinearLayer& l, int in, int out, Lcg64& rng) {
  l.w = Matrix(in, out);
  l.gw = Matrix(in, out);
  l.b = Matrix(1, out);
  l.gb = Matrix(1, out);
  init_uniform(l.w, rng, std::sqrt(1.0 / in));
}

// y[r] = x . w[:, r] + b[r], row by row
void linear_forward(const LinearLayer& l, const Matrix& x, Matrix& y) {
  y = Matrix(x.rows, l.w.cols);
  for (int t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    double* yr = y.row(t);
    for (int o = 0; o < l.w.cols; ++o) yr[o] = l.b.at(0, o);
    for (int i = 0; i < x.cols; ++i) {
      const double* wr = l.w.row(i);
      double xi = xr[i];
      for (int o = 0; o < l.w.cols; ++o) yr[o] += xi * wr[o];
    }
  }
}

// Accumulates gw/gb and, when dx != nullptr, the input gradient.
void linear_backward(LinearLayer& l, const Matrix& x, const Matrix& dy,
                     Matrix* dx) {
  for (int t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    const double* dyr = dy.row(t);
    for (int o = 0; o < l.w.cols; ++o) l.gb.at(0, o) += dyr[o];
    for (int i = 0; i < x.cols; ++i) {
      double* gwr = l.gw.row(i);
      double xi = xr[i];
      for (int o = 0; o < l.w.cols; ++o) gwr[o] += xi * dyr[o];
    }
    if (dx != nullptr) {
      double* dxr = dx->row(t);
      for (int i = 0; i < x.cols; ++i) {
        const double* wr = l.w.row(i);
        double acc = 0.0;
        for (int o = 0; o < l.w.cols; ++o) acc += wr[o] * dyr[o];
        dxr[i] += acc;
      }
    }
  }
}

}  // namespace

Variant variant_from_string(const std::string& s) {
  if (s == "1" || s == "M1" || s == "m1") return Variant::M1;
  if (s == "2" || s == "M2" || s == "m2") return Variant::M2;
  if (s == "3" || s == "M3" || s == "m3") return Variant::M3;
  throw Error(ErrorCode::Config, "unknown model variant '" + s + "'");
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::M1: return "1";
    case Variant::M2: return "2";
    case Variant::M3: return "3";
  }
  return "?";
}

ModelConfig ModelConfig::for_variant(Variant v, ModelDims dims) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.dims = dims;
  cfg.toggles = ModelToggles{};  // ssl, sr_emb, mel, multi_cnn, blstm on
  cfg.toggles.cross_attn = (v != Variant::M1);
  cfg.toggles.mfcc = (v == Variant::M3);
  return cfg;
}

int ModelConfig::fused_dim() const {
  int d = 0;
  if (toggles.ssl) d += dims.d_enc;
  if (toggles.sr_emb) d += dims.d_sr;
  if (toggles.mel) d += d_cnn();
  if (toggles.mfcc) d += dims.c_mfcc;
  if (attn_active()) d += dims.d_enc;
  return d;
}

int ModelConfig::head_input_dim() const {
  return toggles.blstm ? 2 * dims.blstm_hidden : fused_dim();
}

void ModelConfig::validate() const {
  require(toggles.ssl || toggles.mel || toggles.mfcc, ErrorCode::Config,
          "at least one feature stream (ssl/mel/mfcc) must be enabled");
  require(dims.d_enc >= 1 && dims.d_sr >= 1 && dims.f_mel >= 1 &&
              dims.c_mfcc >= 1 && dims.cnn_channels >= 1 &&
              dims.blstm_hidden >= 1 && dims.attn_heads >= 1,
          ErrorCode::Config, "model dimensions must be positive");
  if (attn_active()) {
    require(dims.d_enc % dims.attn_heads == 0, ErrorCode::Config,
            "attn_heads must divide d_enc");
  }
}

ScoreModel::ScoreModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  Lcg64 rng(seed ^ 0x6d0c1b2a3f4e5d6cULL);

  if (cfg_.toggles.sr_emb) {
    rate_table_ = RateEmbeddingTable(cfg_.dims.d_sr, seed);
  }
  if (cfg_.cnn_active()) {
    for (int k : kKernels) {
      ConvBranch b;
      b.kernel = k;
      b.w = Matrix(cfg_.dims.cnn_channels, k * k);
      b.gw = Matrix(cfg_.dims.cnn_channels, k * k);
      b.b = Matrix(1, cfg_.dims.cnn_channels);
      b.gb = Matrix(1, cfg_.dims.cnn_channels);
      init_uniform(b.w, rng, std::sqrt(1.0 / (k * k)));
      cnn_.push_back(std::move(b));
    }
  }
  if (cfg_.mel_proj_active()) {
    init_linear(mel_proj_, cfg_.dims.f_mel, cfg_.d_cnn(), rng);
  }
  if (cfg_.attn_active()) {
    init_linear(attn_wq_, cfg_.dims.d_enc, cfg_.dims.d_enc, rng);
    init_linear(attn_wk_, cfg_.d_cnn(), cfg_.dims.d_enc, rng);
    init_linear(attn_wv_, cfg_.d_cnn(), cfg_.dims.d_enc, rng);
    init_linear(attn_wo_, cfg_.dims.d_enc, cfg_.dims.d_enc, rng);
  }
  if (cfg_.toggles.blstm) {
    const int h = cfg_.dims.blstm_hidden;
    const int in = cfg_.fused_dim();
    for (int d = 0; d < 2; ++d) {
      lstm_[d].wx = Matrix(4 * h, in);
      lstm_[d].gwx = Matrix(4 * h, in);
      lstm_[d].wh = Matrix(4 * h, h);
      lstm_[d].gwh = Matrix(4 * h, h);
      lstm_[d].b = Matrix(1, 4 * h);
      lstm_[d].gb = Matrix(1, 4 * h);
      init_uniform(lstm_[d].wx, rng, std::sqrt(1.0 / in));
      init_uniform(lstm_[d].wh, rng, std::sqrt(1.0 / h));
    }
  }
  init_linear(head_, cfg_.head_input_dim(), 1, rng);
}

void ScoreModel::check_bundle(const FeatureBundle& bundle) const {
  int t = -1;
  auto check_stream = [&](const Matrix& m, int want_cols, const char* name) {
    require(m.rows >= 1, ErrorCode::Validation,
            std::string("empty ") + name + " stream");
    require(m.cols == want_cols, ErrorCode::Shape,
            std::string(name) + " stream width " + std::to_string(m.cols) +
                " does not match config " + std::to_string(want_cols));
    if (t < 0) t = m.rows;
    require(m.rows == t, ErrorCode::Shape,
            "feature streams disagree on frame count");
  };
  if (cfg_.toggles.ssl) check_stream(bundle.encoder_frames, cfg_.dims.d_enc, "encoder");
  if (cfg_.toggles.mel) check_stream(bundle.mel_aligned, cfg_.dims.f_mel, "mel");
  if (cfg_.toggles.mfcc) check_stream(bundle.mfcc_aligned, cfg_.dims.c_mfcc, "mfcc");
  if (cfg_.toggles.sr_emb) {
    require(bundle.rate_id >= 0 && bundle.rate_id < 3, ErrorCode::Validation,
            "rate_id out of range");
  }
}

std::vector<Matrix> ScoreModel::conv_branch_maps(int branch,
                                                 const Matrix& input) const {
  require(branch >= 0 && branch < static_cast<int>(cnn_.size()),
          ErrorCode::Config, "no such conv branch");
  const ConvBranch& cb = cnn_[branch];
  const int k = cb.kernel, p = k / 2;
  const int t_len = input.rows, f_len = input.cols;
  std::vector<Matrix> maps;
  for (int c = 0; c < cfg_.dims.cnn_channels; ++c) {
    Matrix m(t_len, f_len);
    for (int t = 0; t < t_len; ++t) {
      for (int f = 0; f < f_len; ++f) {
        double acc = cb.b.at(0, c);
        for (int dt = 0; dt < k; ++dt) {
          int ti = t + dt - p;
          if (ti < 0 || ti >= t_len) continue;
          for (int df = 0; df < k; ++df) {
            int fi = f + df - p;
            if (fi < 0 || fi >= f_len) continue;
            acc += cb.w.at(c, dt * k + df) * input.at(ti, fi);
          }
        }
        m.at(t, f) = acc;
      }
    }
    maps.push_back(std::move(m));
  }
  return maps;
}

Matrix ScoreModel::run_cnn(const Matrix& mel, ForwardCache& cache) const {
  (void)cache;
  const int t_len = mel.rows, f_len = mel.cols;
  const int ch = cfg_.dims.cnn_channels;
  Matrix out(t_len, cfg_.d_cnn());
  for (size_t bi = 0; bi < cnn_.size(); ++bi) {
    const ConvBranch& cb = cnn_[bi];
    const int k = cb.kernel, p = k / 2;
    for (int c = 0; c < ch; ++c) {
      const double* w = cb.w.row(c);
      for (int t = 0; t < t_len; ++t) {
        double acc = 0.0;
        for (int f = 0; f < f_len; ++f) {
          double cell = cb.b.at(0, c);
          for (int dt = 0; dt < k; ++dt) {
            int ti = t + dt - p;
            if (ti < 0 || ti >= t_len) continue;
            const double* mrow = mel.row(ti);
            for (int df = 0; df < k; ++df) {
              int fi = f + df - p;
              if (fi < 0 || fi >= f_len) continue;
              cell += w[dt * k + df] * mrow[fi];
            }
          }
          acc += cell;
        }
        out.at(t, static_cast<int>(bi) * ch + c) = acc / f_len;
      }
    }
  }
  return out;
}

namespace {

// Backward of one conv branch + mel-axis mean pooling. dout is [T x ch]
// for this branch only. dmel is ignored (the spectrogram is input data).
void conv_backward(ConvBranch& cb, const Matrix& mel, const Matrix& dout,
                   int ch) {
  const int k = cb.kernel, p = k / 2;
  const int t_len = mel.rows, f_len = mel.cols;
  for (int c = 0; c < ch; ++c) {
    double* gw = cb.gw.row(c);
    double gb = 0.0;
    for (int t = 0; t < t_len; ++t) {
      double g = dout.at(t, c) / f_len;
      if (g == 0.0) continue;
      gb += dout.at(t, c);
      for (int dt = 0; dt < k; ++dt) {
        int ti = t + dt - p;
        if (ti < 0 || ti >= t_len) continue;
        const double* mrow = mel.row(ti);
        for (int df = 0; df < k; ++df) {
          // sum over f of in-range inputs
          double acc = 0.0;
          for (int f = 0; f < f_len; ++f) {
            int fi = f + df - p;
            if (fi >= 0 && fi < f_len) acc += mrow[fi];
          }
          gw[dt * k + df] += g * acc;
        }
      }
    }
    cb.gb.at(0, c) += gb;
  }
}

}  // namespace

Matrix ScoreModel::run_attention(const Matrix& xq, const Matrix& xkv,
                                 ForwardCache& cache) const {
  const int t_len = xq.rows;
  const int d = cfg_.dims.d_enc;
  const int heads = cfg_.dims.attn_heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  linear_forward(attn_wq_, xq, cache.attn_q);
  linear_forward(attn_wk_, xkv, cache.attn_k);
  linear_forward(attn_wv_, xkv, cache.attn_v);

  cache.attn_weights.assign(heads, Matrix(t_len, t_len));
  cache.attn_ctx = Matrix(t_len, d);
  for (int h = 0; h < heads; ++h) {
    Matrix& a = cache.attn_weights[h];
    const int off = h * dh;
    for (int i = 0; i < t_len; ++i) {
      double mx = -1e300;
      for (int j = 0; j < t_len; ++j) {
        double logit = 0.0;
        for (int e = 0; e < dh; ++e)
          logit += cache.attn_q.at(i, off + e) * cache.attn_k.at(j, off + e);
        logit *= scale;
        a.at(i, j) = logit;
        mx = std::max(mx, logit);
      }
      double z = 0.0;
      for (int j = 0; j < t_len; ++j) {
        a.at(i, j) = std::exp(a.at(i, j) - mx);
        z += a.at(i, j);
      }
      for (int j = 0; j < t_len; ++j) a.at(i, j) /= z;
      for (int e = 0; e < dh; ++e) {
        double acc = 0.0;
        for (int j = 0; j < t_len; ++j)
          acc += a.at(i, j) * cache.attn_v.at(j, off + e);
        cache.attn_ctx.at(i, off + e) = acc;
      }
    }
  }

  Matrix out;
  linear_forward(attn_wo_, cache.attn_ctx, out);
  for (int i = 0; i < t_len; ++i) {
    const double* q = xq.row(i);
    double* o = out.row(i);
    for (int e = 0; e < d; ++e) o[e] += q[e];  // residual
  }
  return out;
}

void ScoreModel::run_blstm(const Matrix& input, ForwardCache& cache) const {
  const int t_len = input.rows;
  const int h = cfg_.dims.blstm_hidden;
  const int in = input.cols;
  for (int dir = 0; dir < 2; ++dir) {
    cache.lstm_i[dir] = Matrix(t_len, h);
    cache.lstm_f[dir] = Matrix(t_len, h);
    cache.lstm_g[dir] = Matrix(t_len, h);
    cache.lstm_o[dir] = Matrix(t_len, h);
    cache.lstm_c[dir] = Matrix(t_len, h);
    cache.lstm_h[dir] = Matrix(t_len, h);
    const LstmDirection& L = lstm_[dir];
    std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0), z(4 * h);
    for (int s = 0; s < t_len; ++s) {
      const int t = dir == 0 ? s : t_len - 1 - s;
      const double* x = input.row(t);
      for (int r = 0; r < 4 * h; ++r) {
        double acc = L.b.at(0, r);
        const double* wx = L.wx.row(r);
        for (int i = 0; i < in; ++i) acc += wx[i] * x[i];
        const double* wh = L.wh.row(r);
        for (int i = 0; i < h; ++i) acc += wh[i] * h_prev[i];
        z[r] = acc;
      }
      for (int u = 0; u < h; ++u) {
        double ig = sigmoid(z[u]);
        double fg = sigmoid(z[h + u]);
        double gg = std::tanh(z[2 * h + u]);
        double og = sigmoid(z[3 * h + u]);
        double c = fg * c_prev[u] + ig * gg;
        double hval = og * std::tanh(c);
        cache.lstm_i[dir].at(t, u) = ig;
        cache.lstm_f[dir].at(t, u) = fg;
        cache.lstm_g[dir].at(t, u) = gg;
        cache.lstm_o[dir].at(t, u) = og;
        cache.lstm_c[dir].at(t, u) = c;
        cache.lstm_h[dir].at(t, u) = hval;
        c_prev[u] = c;
        h_prev[u] = hval;
      }
    }
  }
}

double ScoreModel::forward(const FeatureBundle& bundle,
                           ForwardCache& cache) const {
  check_bundle(bundle);
  const int t_len = cfg_.toggles.ssl   ? bundle.encoder_frames.rows
                    : cfg_.toggles.mel ? bundle.mel_aligned.rows
                                       : bundle.mfcc_aligned.rows;
  require(t_len >= 1, ErrorCode::Validation, "forward on empty bundle");
  cache = ForwardCache{};
  cache.t = t_len;
  cache.rate_id = bundle.rate_id;

  if (cfg_.cnn_active()) {
    cache.cnn_out = run_cnn(bundle.mel_aligned, cache);
  } else if (cfg_.mel_proj_active()) {
    linear_forward(mel_proj_, bundle.mel_aligned, cache.cnn_out);
  }

  Matrix attn_out;
  if (cfg_.attn_active()) {
    attn_out = run_attention(bundle.encoder_frames, cache.cnn_out, cache);
  }

  cache.fused = Matrix(t_len, cfg_.fused_dim());
  int off = 0;
  auto put = [&](const Matrix& m) {
    for (int t = 0; t < t_len; ++t)
      std::memcpy(cache.fused.row(t) + off, m.row(t), sizeof(double) * m.cols);
    off += m.cols;
  };
  if (cfg_.toggles.ssl) put(bundle.encoder_frames);
  if (cfg_.toggles.sr_emb) {
    const double* row = rate_table_.vectors.row(bundle.rate_id);
    for (int t = 0; t < t_len; ++t)
      std::memcpy(cache.fused.row(t) + off, row, sizeof(double) * cfg_.dims.d_sr);
    off += cfg_.dims.d_sr;
  }
  if (cfg_.toggles.mel) put(cache.cnn_out);
  if (cfg_.toggles.mfcc) put(bundle.mfcc_aligned);
  if (cfg_.attn_active()) put(attn_out);

  const Matrix* frames = &cache.fused;
  if (cfg_.toggles.blstm) {
    run_blstm(cache.fused, cache);
  }

  const int head_in = cfg_.head_input_dim();
  cache.pooled.assign(head_in, 0.0);
  if (cfg_.toggles.blstm) {
    const int h = cfg_.dims.blstm_hidden;
    for (int t = 0; t < t_len; ++t) {
      for (int u = 0; u < h; ++u) {
        cache.pooled[u] += cache.lstm_h[0].at(t, u);
        cache.pooled[h + u] += cache.lstm_h[1].at(t, u);
      }
    }
  } else {
    for (int t = 0; t < t_len; ++t) {
      const double* r = frames->row(t);
      for (int i = 0; i < head_in; ++i) cache.pooled[i] += r[i];
    }
  }
  for (double& x : cache.pooled) x /= t_len;

  double score = head_.b.at(0, 0);
  for (int i = 0; i < head_in; ++i) score += head_.w.at(i, 0) * cache.pooled[i];
  require(std::isfinite(score), ErrorCode::Divergence, "non-finite score");
  cache.score = score;
  return score;
}

double ScoreModel::forward(const FeatureBundle& bundle) const {
  ForwardCache cache;
  return forward(bundle, cache);
}

void ScoreModel::backward(const FeatureBundle& bundle,
                          const ForwardCache& cache, double dscore) {
  const int t_len = cache.t;
  const int head_in = cfg_.head_input_dim();

  // Head
  std::vector<double> dpooled(head_in);
  for (int i = 0; i < head_in; ++i) {
    head_.gw.at(i, 0) += cache.pooled[i] * dscore;
    dpooled[i] = head_.w.at(i, 0) * dscore;
  }
  head_.gb.at(0, 0) += dscore;

  // Mean pool over time
  Matrix dframes(t_len, head_in);
  for (int t = 0; t < t_len; ++t) {
    double* r = dframes.row(t);
    for (int i = 0; i < head_in; ++i) r[i] = dpooled[i] / t_len;
  }

  Matrix dfused;
  if (cfg_.toggles.blstm) {
    const int h = cfg_.dims.blstm_hidden;
    const int in = cfg_.fused_dim();
    dfused = Matrix(t_len, in);
    for (int dir = 0; dir < 2; ++dir) {
      LstmDirection& L = lstm_[dir];
      std::vector<double> dh_rec(h, 0.0), dc_rec(h, 0.0), dz(4 * h);
      for (int s = t_len - 1; s >= 0; --s) {
        const int t = dir == 0 ? s : t_len - 1 - s;
        const int t_prev = dir == 0 ? t - 1 : t + 1;
        const bool has_prev = s > 0;
        for (int u = 0; u < h; ++u) {
          double ig = cache.lstm_i[dir].at(t, u);
          double fg = cache.lstm_f[dir].at(t, u);
          double gg = cache.lstm_g[dir].at(t, u);
          double og = cache.lstm_o[dir].at(t, u);
          double c = cache.lstm_c[dir].at(t, u);
          double tc = std::tanh(c);
          double dh = dframes.at(t, dir * h + u) + dh_rec[u];
          double dc = dc_rec[u] + dh * og * (1.0 - tc * tc);
          double c_prev = has_prev ? cache.lstm_c[dir].at(t_prev, u) : 0.0;
          dz[u] = dc * gg * ig * (1.0 - ig);
          dz[h + u] = dc * c_prev * fg * (1.0 - fg);
          dz[2 * h + u] = dc * ig * (1.0 - gg * gg);
          dz[3 * h + u] = dh * tc * og * (1.0 - og);
          dc_rec[u] = dc * fg;
        }
        const double* x = cache.fused.row(t);
        double* dx = dfused.row(t);
        std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
        for (int r = 0; r < 4 * h; ++r) {
          double d = dz[r];
          if (d == 0.0) continue;
          L.gb.at(0, r) += d;
          double* gwx = L.gwx.row(r);
          const double* wx = L.wx.row(r);
          for (int i = 0; i < in; ++i) {
            gwx[i] += d * x[i];
            dx[i] += d * wx[i];
          }
          double* gwh = L.gwh.row(r);
          const double* wh = L.wh.row(r);
          if (has_prev) {
            const double* hp = cache.lstm_h[dir].row(t_prev);
            for (int i = 0; i < h; ++i) gwh[i] += d * hp[i];
          }
          for (int i = 0; i < h; ++i) dh_rec[i] += d * wh[i];
        }
      }
    }
  } else {
    dfused = dframes;
  }

  // Split the fused gradient back into stream slices.
  int off = 0;
  if (cfg_.toggles.ssl) off += cfg_.dims.d_enc;  // encoder is frozen input
  if (cfg_.toggles.sr_emb) {
    std::vector<double> dsr(cfg_.dims.d_sr, 0.0);
    for (int t = 0; t < t_len; ++t) {
      const double* r = dfused.row(t) + off;
      for (int i = 0; i < cfg_.dims.d_sr; ++i) dsr[i] += r[i];
    }
    rate_table_.accumulate_grad(cache.rate_id, dsr.data());
    off += cfg_.dims.d_sr;
  }

  Matrix dspectral;
  int spectral_off = -1;
  if (cfg_.toggles.mel) {
    spectral_off = off;
    dspectral = Matrix(t_len, cfg_.d_cnn());
    for (int t = 0; t < t_len; ++t)
      std::memcpy(dspectral.row(t), dfused.row(t) + spectral_off,
                  sizeof(double) * cfg_.d_cnn());
    off += cfg_.d_cnn();
  }
  if (cfg_.toggles.mfcc) off += cfg_.dims.c_mfcc;  // raw input stream

  if (cfg_.attn_active()) {
    const int d = cfg_.dims.d_enc;
    const int heads = cfg_.dims.attn_heads;
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix dout(t_len, d);
    for (int t = 0; t < t_len; ++t)
      std::memcpy(dout.row(t), dfused.row(t) + off, sizeof(double) * d);

    // Output projection (residual branch feeds the frozen encoder: dropped).
    Matrix dctx(t_len, d);
    linear_backward(attn_wo_, cache.attn_ctx, dout, &dctx);

    Matrix dq(t_len, d), dk(t_len, d), dv(t_len, d);
    for (int h = 0; h < heads; ++h) {
      const Matrix& a = cache.attn_weights[h];
      const int o = h * dh;
      for (int i = 0; i < t_len; ++i) {
        // dA and softmax backward, one query row at a time
        std::vector<double> da(t_len);
        for (int j = 0; j < t_len; ++j) {
          double acc = 0.0;
          for (int e = 0; e < dh; ++e)
            acc += dctx.at(i, o + e) * cache.attn_v.at(j, o + e);
          da[j] = acc;
        }
        double dot = 0.0;
        for (int j = 0; j < t_len; ++j) dot += da[j] * a.at(i, j);
        for (int j = 0; j < t_len; ++j) {
          double dl = a.at(i, j) * (da[j] - dot);
          if (dl != 0.0) {
            for (int e = 0; e < dh; ++e) {
              dq.at(i, o + e) += dl * scale * cache.attn_k.at(j, o + e);
              dk.at(j, o + e) += dl * scale * cache.attn_q.at(i, o + e);
            }
          }
          double aij = a.at(i, j);
          for (int e = 0; e < dh; ++e)
            dv.at(j, o + e) += aij * dctx.at(i, o + e);
        }
      }
    }
    linear_backward(attn_wq_, bundle.encoder_frames, dq, nullptr);
    Matrix dxkv(t_len, cfg_.d_cnn());
    linear_backward(attn_wk_, cache.cnn_out, dk, &dxkv);
    linear_backward(attn_wv_, cache.cnn_out, dv, &dxkv);
    for (int t = 0; t < t_len; ++t) {
      double* dst = dspectral.row(t);
      const double* src = dxkv.row(t);
      for (int i = 0; i < cfg_.d_cnn(); ++i) dst[i] += src[i];
    }
  }

  if (cfg_.cnn_active()) {
    const int ch = cfg_.dims.cnn_channels;
    for (size_t bi = 0; bi < cnn_.size(); ++bi) {
      Matrix dbranch(t_len, ch);
      for (int t = 0; t < t_len; ++t)
        std::memcpy(dbranch.row(t), dspectral.row(t) + static_cast<int>(bi) * ch,
                    sizeof(double) * ch);
      conv_backward(cnn_[bi], bundle.mel_aligned, dbranch, ch);
    }
  } else if (cfg_.mel_proj_active()) {
    linear_backward(mel_proj_, bundle.mel_aligned, dspectral, nullptr);
  }
}

void ScoreModel::zero_grad() {
  for (ParamRef& p : parameters()) p.grad->fill(0.0);
}

std::vector<ParamRef> ScoreModel::parameters() {
  std::vector<ParamRef> out;
  auto add = [&](const std::string& name, Matrix& v, Matrix& g, bool exempt) {
    out.push_back({name, &v, &g, exempt});
  };
  if (cfg_.toggles.sr_emb) {
    add("sr_emb.table", rate_table_.vectors, rate_table_.grad, true);
  }
  for (size_t i = 0; i < cnn_.size(); ++i) {
    std::string p = "cnn.k" + std::to_string(cnn_[i].kernel);
    add(p + ".w", cnn_[i].w, cnn_[i].gw, false);
    add(p + ".b", cnn_[i].b, cnn_[i].gb, true);
  }
  auto add_linear = [&](const std::string& p, LinearLayer& l) {
    add(p + ".w", l.w, l.gw, false);
    add(p + ".b", l.b, l.gb, true);
  };
  if (cfg_.mel_proj_active()) add_linear("mel_proj", mel_proj_);
  if (cfg_.attn_active()) {
    add_linear("attn.wq", attn_wq_);
    add_linear("attn.wk", attn_wk_);
    add_linear("attn.wv", attn_wv_);
    add_linear("attn.wo", attn_wo_);
  }
  if (cfg_.toggles.blstm) {
    for (int d = 0; d < 2; ++d) {
      std::string p = d == 0 ? "blstm.fwd" : "blstm.bwd";
      add(p + ".wx", lstm_[d].wx, lstm_[d].gwx, false);
      add(p + ".wh", lstm_[d].wh, lstm_[d].gwh, false);
      add(p + ".b", lstm_[d].b, lstm_[d].gb, true);
    }
  }
  add_linear("head", head_);
  return out;
}

int64_t ScoreModel::parameter_count() const {
  int64_t n = 0;
  for (const ParamRef& p : const_cast<ScoreModel*>(this)->parameters())
    n += static_cast<int64_t>(p.value->size());
  return n;
}

int64_t parameter_count(const ModelConfig& cfg) {
  cfg.validate();
  int64_t n = 0;
  if (cfg.toggles.sr_emb) n += 3LL * cfg.dims.d_sr;
  if (cfg.cnn_active()) {
    for (int k : kKernels)
      n += static_cast<int64_t>(cfg.dims.cnn_channels) * k * k + cfg.dims.cnn_channels;
  }
  if (cfg.mel_proj_active())
    n += static_cast<int64_t>(cfg.dims.f_mel) * cfg.d_cnn() + cfg.d_cnn();
  if (cfg.attn_active()) {
    int64_t d = cfg.dims.d_enc;
    n += d * d + d;                 // wq
    n += 2 * (static_cast<int64_t>(cfg.d_cnn()) * d + d);  // wk, wv
    n += d * d + d;                 // wo
  }
  if (cfg.toggles.blstm) {
    int64_t h = cfg.dims.blstm_hidden;
    int64_t in = cfg.fused_dim();
    n += 2 * (4 * h * in + 4 * h * h + 4 * h);
  }
  n += static_cast<int64_t>(cfg.head_input_dim()) + 1;
  return n;
}

std::string model_config_to_text(const ModelConfig& cfg) {
  std::ostringstream out;
  out << "variant=" << variant_to_string(cfg.variant) << '\n';
  out << "ssl=" << cfg.toggles.ssl << '\n';
  out << "sr_emb=" << cfg.toggles.sr_emb << '\n';
  out << "mel=" << cfg.toggles.mel << '\n';
  out << "multi_cnn=" << cfg.toggles.multi_cnn << '\n';
  out << "mfcc=" << cfg.toggles.mfcc << '\n';
  out << "cross_attn=" << cfg.toggles.cross_attn << '\n';
  out << "blstm=" << cfg.toggles.blstm << '\n';
  out << "d_enc=" << cfg.dims.d_enc << '\n';
  out << "d_sr=" << cfg.dims.d_sr << '\n';
  out << "f_mel=" << cfg.dims.f_mel << '\n';
  out << "c_mfcc=" << cfg.dims.c_mfcc << '\n';
  out << "cnn_channels=" << cfg.dims.cnn_channels << '\n';
  out << "attn_heads=" << cfg.dims.attn_heads << '\n';
  out << "blstm_hidden=" << cfg.dims.blstm_hidden << '\n';
  return out.str();
}

ModelConfig model_config_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    require(it != kv.end(), ErrorCode::Schema,
            "checkpoint config missing key '" + k + "'");
    return it->second;
  };
  ModelConfig cfg;
  cfg.variant = variant_from_string(get("variant"));
  cfg.toggles.ssl = get("ssl") == "1";
  cfg.toggles.sr_emb = get("sr_emb") == "1";
  cfg.toggles.mel = get("mel") == "1";
  cfg.toggles.multi_cnn = get("multi_cnn") == "1";
  cfg.toggles.mfcc = get("mfcc") == "1";
  cfg.toggles.cross_attn = get("cross_attn") == "1";
  cfg.toggles.blstm = get("blstm") == "1";
  cfg.dims.d_enc = std::stoi(get("d_enc"));
  cfg.dims.d_sr = std::stoi(get("d_sr"));
  cfg.dims.f_mel = std::stoi(get("f_mel"));
  cfg.dims.c_mfcc = std::stoi(get("c_mfcc"));
  cfg.dims.cnn_channels = std::stoi(get("cnn_channels"));
  cfg.dims.attn_heads = std::stoi(get("attn_heads"));
  cfg.dims.blstm_hidden = std::stoi(get("blstm_hidden"));
  return cfg;
}

namespace {
constexpr char kCkptMagic[8] = {'H', 'R', 'M', 'C', 'K', 'P', 'T', '1'};

void write_string(std::ostream& out, const std::string& s) {
  uint32_t n = static_cast<uint32_t>(s.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(s.data(), n);
}

std::string read_string(std::istream& in) {
  uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  require(in.good() && n < (1u << 24), ErrorCode::Schema, "corrupt checkpoint string");
  std::string s(n, '\0');
  in.read(s.data(), n);
  require(in.good(), ErrorCode::Schema, "truncated checkpoint");
  return s;
}
}  // namespace

void ScoreModel::save_checkpoint(const std::string& path, uint64_t feature_hash,
                                 uint64_t train_step) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot write checkpoint '" + path + "'");
  out.write(kCkptMagic, sizeof(kCkptMagic));
  write_string(out, model_config_to_text(cfg_));
  out.write(reinterpret_cast<const char*>(&feature_hash), sizeof(feature_hash));
  out.write(reinterpret_cast<const char*>(&seed_), sizeof(seed_));
  out.write(reinterpret_cast<const char*>(&train_step), sizeof(train_step));
  auto params = const_cast<ScoreModel*>(this)->parameters();
  uint32_t np = static_cast<uint32_t>(params.size());
  out.write(reinterpret_cast<const char*>(&np), sizeof(np));
  for (const ParamRef& p : params) {
    write_string(out, p.name);
    int32_t dims[2] = {p.value->rows, p.value->cols};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(p.value->v.data()),
              static_cast<std::streamsize>(p.value->size() * sizeof(double)));
  }
  require(out.good(), ErrorCode::Io, "write failed for checkpoint '" + path + "'");
}

ScoreModel ScoreModel::load_checkpoint(const std::string& path,
                                       uint64_t* feature_hash_out,
                                       uint64_t* train_step_out) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.good() && std::memcmp(magic, kCkptMagic, 8) == 0, ErrorCode::Schema,
          "'" + path + "' is not a checkpoint file");
  ModelConfig cfg = model_config_from_text(read_string(in));
  uint64_t feature_hash = 0, seed = 0, step = 0;
  in.read(reinterpret_cast<char*>(&feature_hash), sizeof(feature_hash));
  in.read(reinterpret_cast<char*>(&seed), sizeof(seed));
  in.read(reinterpret_cast<char*>(&step), sizeof(step));

  ScoreModel model(cfg, seed);
  auto params = model.parameters();
  uint32_t np = 0;
  in.read(reinterpret_cast<char*>(&np), sizeof(np));
  require(in.good() && np == params.size(), ErrorCode::Schema,
          "checkpoint parameter count mismatch in '" + path + "'");
  for (ParamRef& p : params) {
    std::string name = read_string(in);
    require(name == p.name, ErrorCode::Schema,
            "checkpoint parameter '" + name + "' where '" + p.name +
                "' was expected");
    int32_t dims[2];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    require(in.good() && dims[0] == p.value->rows && dims[1] == p.value->cols,
            ErrorCode::Schema, "checkpoint shape mismatch for '" + name + "'");
    in.read(reinterpret_cast<char*>(p.value->v.data()),
            static_cast<std::streamsize>(p.value->size() * sizeof(double)));
    require(in.good(), ErrorCode::Schema, "truncated checkpoint '" + path + "'");
  }
  if (feature_hash_out != nullptr) *feature_hash_out = feature_hash;
  if (train_step_out != nullptr) *train_step_out = step;
  return model;
}

}  // namespace hrm
