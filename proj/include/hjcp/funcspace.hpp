// Points, distances, shift maps, scalar fields with derivative evaluators,
// and reproducible sample clouds. Everything downstream consumes these.
#pragma once

#include "hjcp/core.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <utility>

namespace hjcp {

enum class Smoothness { C0, C1, C2, Cinf };

inline double distance_sq(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), "distance_sq: dimension mismatch");
  return (a - b).squaredNorm();
}

inline double distance(const Vec& a, const Vec& b) { return std::sqrt(distance_sq(a, b)); }

// d_{z1,z2}(a,b) = d(a - z1, b - z2), squared.
inline double shifted_distance_sq(const Vec& a, const Vec& b, const Vec& z1, const Vec& z2) {
  require(a.size() == b.size() && a.size() == z1.size() && a.size() == z2.size(),
          "shifted_distance_sq: dimension mismatch");
  return ((a - z1) - (b - z2)).squaredNorm();
}

// A real-valued function on R^q together with optional analytic derivatives.
// Evaluators must be pure; fields are immutable values after construction.
class ScalarField {
 public:
  using ValueFn = std::function<double(const Vec&)>;
  using GradFn = std::function<Vec(const Vec&)>;
  using HessFn = std::function<Mat(const Vec&)>;

  ScalarField() = default;

  ScalarField(int dim, ValueFn value, Smoothness s = Smoothness::C0)
      : dim_(dim), value_(std::move(value)), smoothness_(s) {}

  ScalarField(int dim, ValueFn value, GradFn grad, Smoothness s = Smoothness::C1)
      : dim_(dim), value_(std::move(value)), grad_(std::move(grad)), smoothness_(s) {}

  ScalarField(int dim, ValueFn value, GradFn grad, HessFn hess, Smoothness s = Smoothness::C2)
      : dim_(dim),
        value_(std::move(value)),
        grad_(std::move(grad)),
        hess_(std::move(hess)),
        smoothness_(s) {}

  int dim() const { return dim_; }
  Smoothness smoothness() const { return smoothness_; }
  bool has_gradient() const { return static_cast<bool>(grad_); }
  bool has_hessian() const { return static_cast<bool>(hess_); }

  std::optional<double> bound_below, bound_above;

  double value(const Vec& x) const {
    require(static_cast<int>(x.size()) == dim_, "ScalarField: dimension mismatch");
    const double v = value_(x);
    require(is_finite(v), "ScalarField: non-finite value");
    if (bound_below && v < *bound_below - 1e-12)
      throw std::domain_error("ScalarField: declared lower bound violated");
    if (bound_above && v > *bound_above + 1e-12)
      throw std::domain_error("ScalarField: declared upper bound violated");
    return v;
  }

  Vec gradient(const Vec& x) const {
    require(has_gradient(), "ScalarField: gradient not available");
    Vec g = grad_(x);
    require(is_finite(g), "ScalarField: non-finite gradient");
    return g;
  }

  Mat hessian(const Vec& x) const {
    require(has_hessian(), "ScalarField: hessian not available");
    Mat h = hess_(x);
    require(is_finite(h), "ScalarField: non-finite hessian");
    require((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + h.cwiseAbs().maxCoeff()),
            "ScalarField: hessian not symmetric");
    return h;
  }

  static ScalarField constant(int dim, double c) {
    ScalarField f(
        dim, [c](const Vec&) { return c; }, [dim](const Vec&) { return Vec::Zero(dim); },
        [dim](const Vec&) { return Mat::Zero(dim, dim); }, Smoothness::Cinf);
    f.bound_below = c;
    f.bound_above = c;
    return f;
  }

  // f(x) = 1/2 x^T A x + <b,x> + c with exact derivatives.
  static ScalarField quadratic(const Mat& A, const Vec& b, double c) {
    const int q = static_cast<int>(b.size());
    Mat As = 0.5 * (A + A.transpose());
    return ScalarField(
        q, [As, b, c](const Vec& x) { return 0.5 * x.dot(As * x) + b.dot(x) + c; },
        [As, b](const Vec& x) { return Vec(As * x + b); }, [As](const Vec&) { return As; },
        Smoothness::Cinf);
  }

  // (a/2) d^2(x - z1, x2 - z2) as a field on E x E, exact derivatives.
  static ScalarField shifted_half_dist_sq(double a, const Vec& z1, const Vec& z2) {
    const int q = static_cast<int>(z1.size());
    Mat H(2 * q, 2 * q);
    H.setZero();
    H.topLeftCorner(q, q) = a * Mat::Identity(q, q);
    H.bottomRightCorner(q, q) = a * Mat::Identity(q, q);
    H.topRightCorner(q, q) = -a * Mat::Identity(q, q);
    H.bottomLeftCorner(q, q) = -a * Mat::Identity(q, q);
    return ScalarField(
        2 * q,
        [a, z1, z2, q](const Vec& w) {
          return 0.5 * a * ((w.head(q) - z1) - (w.tail(q) - z2)).squaredNorm();
        },
        [a, z1, z2, q](const Vec& w) {
          Vec diff = (w.head(q) - z1) - (w.tail(q) - z2);
          Vec g(2 * q);
          g.head(q) = a * diff;
          g.tail(q) = -a * diff;
          return g;
        },
        [H](const Vec&) { return H; }, Smoothness::Cinf);
  }

 private:
  int dim_ = 0;
  ValueFn value_;
  GradFn grad_;
  HessFn hess_;
  Smoothness smoothness_ = Smoothness::C0;
};

// Composition with the shift map s_z(x) = x - z: value(x) = base(x - z).
struct ShiftedField {
  ScalarField base;
  Vec shift;
};

inline ScalarField shifted(const ScalarField& base, const Vec& z) {
  require(static_cast<int>(z.size()) == base.dim(), "shifted: dimension mismatch");
  ScalarField::GradFn g;
  ScalarField::HessFn h;
  if (base.has_gradient()) g = [base, z](const Vec& x) { return base.gradient(x - z); };
  if (base.has_hessian()) h = [base, z](const Vec& x) { return base.hessian(x - z); };
  ScalarField out(
      base.dim(), [base, z](const Vec& x) { return base.value(x - z); }, g, h, base.smoothness());
  out.bound_below = base.bound_below;
  out.bound_above = base.bound_above;
  return out;
}

inline ScalarField as_field(const ShiftedField& sf) { return shifted(sf.base, sf.shift); }

// a*f + b*g with derivative assembly where both sides provide them.
inline ScalarField linear_combination(double a, const ScalarField& f, double b,
                                      const ScalarField& g) {
  require(f.dim() == g.dim(), "linear_combination: dimension mismatch");
  ScalarField::GradFn gr;
  ScalarField::HessFn he;
  if (f.has_gradient() && g.has_gradient())
    gr = [a, f, b, g](const Vec& x) { return Vec(a * f.gradient(x) + b * g.gradient(x)); };
  if (f.has_hessian() && g.has_hessian())
    he = [a, f, b, g](const Vec& x) { return Mat(a * f.hessian(x) + b * g.hessian(x)); };
  Smoothness s = std::min(f.smoothness(), g.smoothness());
  return ScalarField(
      f.dim(), [a, f, b, g](const Vec& x) { return a * f.value(x) + b * g.value(x); }, gr, he, s);
}

// (f1 (+/-) f2)(x1,x2) = f1(x1) +/- f2(x2) on E x E.
inline ScalarField direct_sum(const ScalarField& f1, const ScalarField& f2, double sign2 = +1.0) {
  require(f1.dim() == f2.dim(), "direct_sum: dimension mismatch");
  const int q = f1.dim();
  ScalarField::GradFn gr;
  ScalarField::HessFn he;
  if (f1.has_gradient() && f2.has_gradient())
    gr = [f1, f2, q, sign2](const Vec& w) {
      Vec g(2 * q);
      g.head(q) = f1.gradient(w.head(q));
      g.tail(q) = sign2 * f2.gradient(w.tail(q));
      return g;
    };
  if (f1.has_hessian() && f2.has_hessian())
    he = [f1, f2, q, sign2](const Vec& w) {
      Mat h = Mat::Zero(2 * q, 2 * q);
      h.topLeftCorner(q, q) = f1.hessian(w.head(q));
      h.bottomRightCorner(q, q) = sign2 * f2.hessian(w.tail(q));
      return h;
    };
  Smoothness s = std::min(f1.smoothness(), f2.smoothness());
  return ScalarField(
      2 * q,
      [f1, f2, q, sign2](const Vec& w) {
        return f1.value(w.head(q)) + sign2 * f2.value(w.tail(q));
      },
      gr, he, s);
}

inline ScalarField ominus(const ScalarField& f1, const ScalarField& f2) {
  return direct_sum(f1, f2, -1.0);
}

// Central-difference gradient; the oracle against supplied gradients.
inline Vec fd_gradient(const ScalarField& f, const Vec& x, double h) {
  require(h > 0, "fd_gradient: h must be positive");
  const int q = static_cast<int>(x.size());
  Vec g(q);
  Vec xp = x, xm = x;
  for (int i = 0; i < q; ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    const double fp = f.value(xp);
    const double fm = f.value(xm);
    require(is_finite(fp) && is_finite(fm), "fd_gradient: non-finite stencil value");
    g[i] = (fp - fm) / (2 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

inline Mat fd_hessian(const ScalarField& f, const Vec& x, double h) {
  require(h > 0, "fd_hessian: h must be positive");
  const int q = static_cast<int>(x.size());
  Mat H(q, q);
  const double f0 = f.value(x);
  for (int i = 0; i < q; ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    H(i, i) = (f.value(xp) - 2 * f0 + f.value(xm)) / (h * h);
    for (int j = i + 1; j < q; ++j) {
      Vec xpp = x, xpm = x, xmp = x, xmm = x;
      xpp[i] += h;
      xpp[j] += h;
      xpm[i] += h;
      xpm[j] -= h;
      xmp[i] -= h;
      xmp[j] += h;
      xmm[i] -= h;
      xmm[j] -= h;
      H(i, j) = (f.value(xpp) - f.value(xpm) - f.value(xmp) + f.value(xmm)) / (4 * h * h);
      H(j, i) = H(i, j);
    }
  }
  return H;
}

// Seeded, regenerable point sets. All "for all x" statements downstream are
// sampled on these; regeneration from (seed, descriptor) is bit-identical.
class SampleCloud {
 public:
  enum class Kind { Grid, UniformBall, Explicit };

  static SampleCloud grid1d(double lo, double hi, int n) {
    require(n >= 1 && hi >= lo, "grid1d: bad range");
    SampleCloud c;
    c.kind_ = Kind::Grid;
    c.lo_ = vec1(lo);
    c.hi_ = vec1(hi);
    c.counts_ = {n};
    c.regenerate();
    return c;
  }

  static SampleCloud grid(const Vec& lo, const Vec& hi, const std::vector<int>& counts) {
    require(lo.size() == hi.size() && counts.size() == static_cast<size_t>(lo.size()),
            "grid: descriptor mismatch");
    SampleCloud c;
    c.kind_ = Kind::Grid;
    c.lo_ = lo;
    c.hi_ = hi;
    c.counts_ = counts;
    c.regenerate();
    return c;
  }

  static SampleCloud uniform_ball(const Vec& center, double radius, int count,
                                  std::uint64_t seed) {
    SampleCloud c;
    c.kind_ = Kind::UniformBall;
    c.lo_ = center;
    c.radius_ = radius;
    c.counts_ = {count};
    c.seed_ = seed;
    c.regenerate();
    return c;
  }

  static SampleCloud explicit_points(std::vector<Vec> pts) {
    require(!pts.empty(), "explicit_points: cloud must be nonempty");
    SampleCloud c;
    c.kind_ = Kind::Explicit;
    c.points_ = std::move(pts);
    const auto q = c.points_.front().size();
    for (const auto& p : c.points_) {
      require(p.size() == q, "explicit_points: dimension mismatch");
      require(is_finite(p), "explicit_points: non-finite point");
    }
    return c;
  }

  const std::vector<Vec>& points() const { return points_; }
  size_t size() const { return points_.size(); }
  int dim() const { return points_.empty() ? 0 : static_cast<int>(points_.front().size()); }
  std::uint64_t seed() const { return seed_; }
  Kind kind() const { return kind_; }

  std::string descriptor() const {
    switch (kind_) {
      case Kind::Grid:
        return "grid";
      case Kind::UniformBall:
        return "uniform-in-ball";
      default:
        return "explicit";
    }
  }

  // Spacing estimate used to scale mesh-dependent tolerances.
  double mesh_estimate() const {
    if (kind_ == Kind::Grid) {
      double m = 0;
      for (size_t i = 0; i < counts_.size(); ++i) {
        if (counts_[i] > 1) m = std::max(m, (hi_[i] - lo_[i]) / (counts_[i] - 1));
      }
      return m;
    }
    // Median nearest-neighbour distance over a subsample.
    if (points_.size() < 2) return 0;
    std::vector<double> nn;
    const size_t stride = std::max<size_t>(1, points_.size() / 64);
    for (size_t i = 0; i < points_.size(); i += stride) {
      double best = std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < points_.size(); ++j) {
        if (i == j) continue;
        best = std::min(best, distance(points_[i], points_[j]));
      }
      nn.push_back(best);
    }
    std::nth_element(nn.begin(), nn.begin() + nn.size() / 2, nn.end());
    return nn[nn.size() / 2];
  }

 private:
  void regenerate() {
    points_.clear();
    if (kind_ == Kind::Grid) {
      const int q = static_cast<int>(lo_.size());
      std::vector<int> idx(q, 0);
      while (true) {
        Vec p(q);
        for (int i = 0; i < q; ++i) {
          p[i] = counts_[i] > 1 ? lo_[i] + (hi_[i] - lo_[i]) * idx[i] / double(counts_[i] - 1)
                                : lo_[i];
        }
        points_.push_back(p);
        int axis = 0;
        while (axis < q && ++idx[axis] == counts_[axis]) idx[axis++] = 0;
        if (axis == q) break;
      }
    } else if (kind_ == Kind::UniformBall) {
      DeterministicRng rng(seed_);
      for (int i = 0; i < counts_[0]; ++i) points_.push_back(rng.uniform_in_ball(lo_, radius_));
    }
  }

  Kind kind_ = Kind::Explicit;
  Vec lo_, hi_;
  double radius_ = 0;
  std::vector<int> counts_;
  std::uint64_t seed_ = 0;
  std::vector<Vec> points_;
};

}  // namespace hjcp
