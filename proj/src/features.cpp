#include "hrm/features.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "hrm/encoders.hpp"

namespace hrm {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Iterative radix-2 FFT, in-place on interleaved re/im pairs.
void fft(std::vector<double>& re, std::vector<double>& im) {
  const size_t n = re.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * kPi / static_cast<double>(len);
    double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t j = 0; j < len / 2; ++j) {
        size_t a = i + j, b = i + j + len / 2;
        double xr = re[b] * cr - im[b] * ci;
        double xi = re[b] * ci + im[b] * cr;
        re[b] = re[a] - xr;
        im[b] = im[a] - xi;
        re[a] += xr;
        im[a] += xi;
        double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

uint64_t fnv1a(const void* data, size_t len, uint64_t h) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

uint64_t FeatureConfig::hash() const {
  char buf[160];
  int n = std::snprintf(buf, sizeof(buf), "w=%.6f h=%.6f mel=%d mfcc=%d eps=%.3e",
                        window_ms, hop_ms, n_mel, n_mfcc, log_floor);
  return fnv1a(buf, static_cast<size_t>(n), 14695981039346656037ULL);
}

Matrix mel_filterbank(int n_mel, int n_fft, int sample_rate) {
  const int n_bins = n_fft / 2 + 1;
  Matrix fb(n_mel, n_bins);
  double mel_lo = hz_to_mel(0.0);
  double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mel + 2);
  for (int i = 0; i < n_mel + 2; ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mel + 1));
  }
  double bin_hz = static_cast<double>(sample_rate) / n_fft;
  for (int m = 0; m < n_mel; ++m) {
    double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int b = 0; b < n_bins; ++b) {
      double f = b * bin_hz;
      double w = 0.0;
      if (f > lo && f < mid) w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
      fb.at(m, b) = w;
    }
  }
  return fb;
}

MelSpectrogram mel_spectrogram(const Waveform& wave, const FeatureConfig& cfg) {
  require(is_supported_rate(wave.sample_rate), ErrorCode::Validation,
          "unsupported sample rate");
  const int win = static_cast<int>(std::lround(cfg.window_ms * 1e-3 * wave.sample_rate));
  const int hop = static_cast<int>(std::lround(cfg.hop_ms * 1e-3 * wave.sample_rate));
  const int n = static_cast<int>(wave.samples.size());
  require(n >= win, ErrorCode::Validation,
          "waveform shorter than one analysis window (" + std::to_string(n) +
              " < " + std::to_string(win) + " samples)");

  const int t_mel = 1 + (n - win) / hop;
  const size_t n_fft = next_pow2(static_cast<size_t>(win));
  const int n_bins = static_cast<int>(n_fft / 2 + 1);

  std::vector<double> hann(win);
  for (int i = 0; i < win; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (win - 1));
  }
  Matrix fb = mel_filterbank(cfg.n_mel, static_cast<int>(n_fft), wave.sample_rate);

  MelSpectrogram out;
  out.frames = Matrix(t_mel, cfg.n_mel);
  out.frame_hop_s = static_cast<double>(hop) / wave.sample_rate;
  out.sample_rate = wave.sample_rate;

  std::vector<double> re(n_fft), im(n_fft), power(n_bins);
  for (int t = 0; t < t_mel; ++t) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    const double* s = wave.samples.data() + static_cast<size_t>(t) * hop;
    for (int i = 0; i < win; ++i) re[i] = s[i] * hann[i];
    fft(re, im);
    for (int b = 0; b < n_bins; ++b) power[b] = re[b] * re[b] + im[b] * im[b];
    for (int m = 0; m < cfg.n_mel; ++m) {
      double acc = 0.0;
      const double* w = fb.row(m);
      for (int b = 0; b < n_bins; ++b) acc += w[b] * power[b];
      out.frames.at(t, m) = std::log(acc + cfg.log_floor);
    }
  }
  return out;
}

MfccFrames mfcc(const MelSpectrogram& mel, int n_coeff) {
  const int f = mel.frames.cols;
  require(n_coeff >= 1 && n_coeff <= f, ErrorCode::Config,
          "mfcc coefficient count " + std::to_string(n_coeff) +
              " exceeds mel band count " + std::to_string(f));

  // Orthonormal DCT-II basis: [n_coeff x f]
  Matrix basis(n_coeff, f);
  for (int k = 0; k < n_coeff; ++k) {
    double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / f);
    for (int i = 0; i < f; ++i) {
      basis.at(k, i) = scale * std::cos(kPi * (i + 0.5) * k / f);
    }
  }

  MfccFrames out;
  out.frames = Matrix(mel.frames.rows, n_coeff);
  for (int t = 0; t < mel.frames.rows; ++t) {
    const double* x = mel.frames.row(t);
    for (int k = 0; k < n_coeff; ++k) {
      double acc = 0.0;
      const double* b = basis.row(k);
      for (int i = 0; i < f; ++i) acc += b[i] * x[i];
      out.frames.at(t, k) = acc;
    }
  }
  return out;
}

Matrix align_to(const Matrix& frames, int target_len) {
  require(frames.rows >= 1, ErrorCode::Validation, "align_to: empty input");
  require(target_len >= 1, ErrorCode::Validation, "align_to: target_len < 1");
  if (target_len == frames.rows) return frames;

  Matrix out(target_len, frames.cols);
  if (frames.rows == 1) {
    for (int t = 0; t < target_len; ++t)
      std::memcpy(out.row(t), frames.row(0), sizeof(double) * frames.cols);
    return out;
  }
  for (int t = 0; t < target_len; ++t) {
    double pos = (target_len == 1)
                     ? 0.0
                     : static_cast<double>(t) / (target_len - 1) * (frames.rows - 1);
    int lo = static_cast<int>(pos);
    if (lo >= frames.rows - 1) lo = frames.rows - 2;
    double a = pos - lo;
    const double* r0 = frames.row(lo);
    const double* r1 = frames.row(lo + 1);
    for (int c = 0; c < frames.cols; ++c) {
      out.at(t, c) = (1.0 - a) * r0[c] + a * r1[c];
    }
  }
  return out;
}

FeatureBundle build_bundle(const Waveform& wave, const FrameEncoder& encoder,
                           const FeatureConfig& cfg) {
  FeatureBundle b;
  b.encoder_frames = encoder.encode(wave);
  MelSpectrogram mel = mel_spectrogram(wave, cfg);
  MfccFrames mf = mfcc(mel, cfg.n_mfcc);
  b.mel_aligned = align_to(mel.frames, b.encoder_frames.rows);
  b.mfcc_aligned = align_to(mf.frames, b.encoder_frames.rows);
  b.rate_id = rate_id_of(wave.sample_rate);
  return b;
}

namespace {

constexpr char kCacheMagic[8] = {'H', 'R', 'M', 'F', 'E', 'A', 'T', '1'};

void write_matrix(std::ostream& out, const Matrix& m) {
  int32_t dims[2] = {m.rows, m.cols};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(m.v.data()),
            static_cast<std::streamsize>(m.v.size() * sizeof(double)));
}

bool read_matrix(std::istream& in, Matrix& m) {
  int32_t dims[2];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in.good() || dims[0] < 0 || dims[1] < 0) return false;
  m = Matrix(dims[0], dims[1]);
  in.read(reinterpret_cast<char*>(m.v.data()),
          static_cast<std::streamsize>(m.v.size() * sizeof(double)));
  return in.good();
}

}  // namespace

void save_bundle(const FeatureBundle& bundle, uint64_t config_hash,
                 const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot write feature cache '" + path + "'");
  out.write(kCacheMagic, sizeof(kCacheMagic));
  out.write(reinterpret_cast<const char*>(&config_hash), sizeof(config_hash));
  int32_t rate_id = bundle.rate_id;
  out.write(reinterpret_cast<const char*>(&rate_id), sizeof(rate_id));
  write_matrix(out, bundle.encoder_frames);
  write_matrix(out, bundle.mel_aligned);
  write_matrix(out, bundle.mfcc_aligned);
}

bool load_bundle(const std::string& path, uint64_t config_hash,
                 FeatureBundle& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) return false;
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in.good() || std::memcmp(magic, kCacheMagic, 8) != 0) return false;
  uint64_t h = 0;
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!in.good() || h != config_hash) return false;
  int32_t rate_id = -1;
  in.read(reinterpret_cast<char*>(&rate_id), sizeof(rate_id));
  FeatureBundle b;
  b.rate_id = rate_id;
  if (!read_matrix(in, b.encoder_frames) || !read_matrix(in, b.mel_aligned) ||
      !read_matrix(in, b.mfcc_aligned)) {
    return false;
  }
  out = std::move(b);
  return true;
}

}  // namespace hrm
