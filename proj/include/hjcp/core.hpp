// Shared numeric vocabulary: vector/matrix aliases, deterministic sampling,
// finite-difference helpers.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace hjcp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double kPlusInfinity = std::numeric_limits<double>::infinity();

inline bool is_finite(double x) { return std::isfinite(x); }

inline bool is_finite(const Vec& v) { return v.allFinite(); }

inline bool is_finite(const Mat& m) { return m.allFinite(); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline Vec vec1(double x) {
  Vec v(1);
  v[0] = x;
  return v;
}

inline Vec vec2(double x, double y) {
  Vec v(2);
  v[0] = x;
  v[1] = y;
  return v;
}

// Deterministic uniform doubles in [0,1). std::uniform_real_distribution is
// implementation-defined, so we map the raw 64-bit stream ourselves to keep
// clouds bit-identical across toolchains.
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    // xorshift64* : small, fast, reproducible.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller on the deterministic stream.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vec uniform_in_ball(const Vec& center, double radius) {
    const int q = static_cast<int>(center.size());
    Vec dir(q);
    for (int i = 0; i < q; ++i) dir[i] = normal();
    double n = dir.norm();
    if (n == 0) n = 1;
    const double r = radius * std::pow(uniform01(), 1.0 / q);
    return center + (r / n) * dir;
  }

 private:
  std::uint64_t state_;
};

// Halton low-discrepancy sequence, used for deterministic candidate sweeps.
inline double halton(std::uint64_t index, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  for (std::uint64_t i = index; i > 0; i /= base) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
  }
  return r;
}

// Default relative step for one-sided scaling: h = base*(1+|x|).
inline double fd_step(const Vec& x, double base = 1e-5) { return base * (1.0 + x.norm()); }

}  // namespace hjcp
