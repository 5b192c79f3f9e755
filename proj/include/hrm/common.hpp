#ifndef HRM_COMMON_HPP
#define HRM_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrm {

enum class ErrorCode {
  Ok = 0,
  Io,
  Schema,
  Validation,
  Config,
  UnsupportedFormat,
  Unavailable,
  Shape,
  Divergence,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) throw Error(code, msg);
}

// Row-major dense matrix of doubles. Deliberately minimal; layers do their
// own loops so gradients stay explicit.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return v.size(); }
  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// Deterministic 64-bit linear congruential generator. All parameter
// initialization goes through this so runs are reproducible across
// platforms (no dependence on libstdc++ distribution internals).
class Lcg64 {
 public:
  explicit Lcg64(uint64_t seed) : state_(seed) { next(); }

  uint64_t next() {
    state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
    return state_;
  }

  // uniform in [0, 1)
  double uniform() { return (next() >> 11) * (1.0 / 9007199254740992.0); }

  // uniform in [-half_width, half_width]
  double uniform_sym(double half_width) {
    return (2.0 * uniform() - 1.0) * half_width;
  }

  // uniform integer in [0, n)
  uint64_t below(uint64_t n) { return next() % n; }

 private:
  uint64_t state_;
};

}  // namespace hrm

#endif  // HRM_COMMON_HPP
