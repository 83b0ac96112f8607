// Containment function V, the two point-penalization collections, the Xi
// assembly, and the cut-off functions used by the test-function construction.
#pragma once

#include "hjcp/funcspace.hpp"
#include "hjcp/report.hpp"

#include <cmath>

namespace hjcp {

// V(x) = log(1 + |x|^2/2): nonnegative, vanishing at 0, compact sublevel
// sets, |grad V| <= 1/sqrt(2), semi-concave with constant 1.
struct Containment {
  ScalarField V;
  double kappa_V = 1.0;
  Vec argmin;

  static Containment standard(int q) {
    Containment c;
    c.argmin = Vec::Zero(q);
    c.V = ScalarField(
        q, [](const Vec& x) { return std::log1p(0.5 * x.squaredNorm()); },
        [](const Vec& x) { return Vec(x / (1.0 + 0.5 * x.squaredNorm())); },
        [q](const Vec& x) {
          const double u = 1.0 + 0.5 * x.squaredNorm();
          return Mat(Mat::Identity(q, q) / u - (x * x.transpose()) / (u * u));
        },
        Smoothness::Cinf);
    c.V.bound_below = 0.0;
    c.kappa_V = 1.0;
    return c;
  }

  // Radius of {V <= level} for the standard V (closed-form inversion).
  static double sublevel_radius(double level) { return std::sqrt(2.0 * std::expm1(level)); }
};

// C^2 decreasing profile for collection 2: 1 below lo, 0 above hi.
struct SmoothStepDown {
  double lo = 2.0, hi = 3.0;

  double value(double r) const {
    if (r <= lo) return 1.0;
    if (r >= hi) return 0.0;
    const double t = (r - lo) / (hi - lo);
    return 1.0 - (10 * t * t * t - 15 * t * t * t * t + 6 * t * t * t * t * t);
  }
  double d1(double r) const {
    if (r <= lo || r >= hi) return 0.0;
    const double t = (r - lo) / (hi - lo);
    return -(30 * t * t - 60 * t * t * t + 30 * t * t * t * t) / (hi - lo);
  }
  double d2(double r) const {
    if (r <= lo || r >= hi) return 0.0;
    const double t = (r - lo) / (hi - lo);
    return -(60 * t - 180 * t * t + 120 * t * t * t) / ((hi - lo) * (hi - lo));
  }
};

// First and second order point penalizations. Collection 1 is globally
// linear/quadratic; collection 2 flattens both beyond R'' so that integral
// operators see bounded penalties. The two agree on d < R'.
//
// The default radii start above 2: with |p| <= 1 the quadratic xi dominates
// the linear zeta only beyond d = 2, so the domination item of the
// penalization definition needs R > 2.
class PenaltyFamily {
 public:
  int collection = 1;
  double R = 2.5, Rp = 3.5, Rpp = 4.5;
  SmoothStepDown ell{3.5, 4.5};  // collection 2 profile on [R', R'']
  double kappa_xi = 1.0;

  static PenaltyFamily collection1() { return PenaltyFamily{}; }

  static PenaltyFamily collection2(double R_ = 2.5, double Rp_ = 3.5, double Rpp_ = 4.5) {
    require(Rpp_ > Rp_ && Rp_ > R_ && R_ > 0, "PenaltyFamily: need R'' > R' > R > 0");
    PenaltyFamily f;
    f.collection = 2;
    f.R = R_;
    f.Rp = Rp_;
    f.Rpp = Rpp_;
    f.ell = SmoothStepDown{Rp_, Rpp_};
    // Hessian of xi-bar is certified against this value by certify_family.
    f.kappa_xi = f.scan_kappa_xi();
    return f;
  }

  // xi_z with analytic derivatives.
  ScalarField xi(const Vec& z) const {
    const int q = static_cast<int>(z.size());
    if (collection == 1) {
      return ScalarField(
          q, [z](const Vec& x) { return 0.5 * (x - z).squaredNorm(); },
          [z](const Vec& x) { return Vec(x - z); },
          [q](const Vec&) { return Mat(Mat::Identity(q, q)); }, Smoothness::Cinf);
    }
    const SmoothStepDown l = ell;
    const double plateau = (Rpp + 1.0) * (Rpp + 1.0);
    auto phi = [l, plateau](double d) { return plateau + l.value(d) * (0.5 * d * d - plateau); };
    auto dphi = [l, plateau](double d) {
      return l.d1(d) * (0.5 * d * d - plateau) + l.value(d) * d;
    };
    auto ddphi = [l, plateau](double d) {
      return l.d2(d) * (0.5 * d * d - plateau) + 2.0 * l.d1(d) * d + l.value(d);
    };
    const double inner = Rp;
    return ScalarField(
        q,
        [z, phi, inner](const Vec& x) {
          const double d = (x - z).norm();
          if (d <= inner) return 0.5 * d * d;
          return phi(d);
        },
        [z, dphi, inner](const Vec& x) {
          const Vec u = x - z;
          const double d = u.norm();
          if (d <= inner) return u;
          return Vec((dphi(d) / d) * u);
        },
        [z, dphi, ddphi, inner, q](const Vec& x) {
          const Vec u = x - z;
          const double d = u.norm();
          if (d <= inner) return Mat(Mat::Identity(q, q));
          const Vec n = u / d;
          return Mat(ddphi(d) * (n * n.transpose()) +
                     (dphi(d) / d) * (Mat::Identity(q, q) - n * n.transpose()));
        },
        Smoothness::C2);
  }

  // zeta_{z,p}; linear in p with coefficient vector zeta_coeff(z, y).
  ScalarField zeta(const Vec& z, const Vec& p) const {
    const int q = static_cast<int>(z.size());
    if (collection == 1) {
      return ScalarField(
          q, [z, p](const Vec& x) { return p.dot(x - z); }, [p](const Vec&) { return p; },
          [q](const Vec&) { return Mat(Mat::Zero(q, q)); }, Smoothness::Cinf);
    }
    const SmoothStepDown l = ell;
    const double inner = Rp;
    return ScalarField(
        q,
        [z, p, l](const Vec& x) {
          const double d = (x - z).norm();
          return l.value(d) * p.dot(x - z);
        },
        [z, p, l, inner](const Vec& x) {
          const Vec u = x - z;
          const double d = u.norm();
          if (d <= inner) return p;
          const Vec n = u / d;
          return Vec(l.d1(d) * p.dot(u) * n + l.value(d) * p);
        },
        [z, p, l, inner, q](const Vec& x) {
          const Vec u = x - z;
          const double d = u.norm();
          if (d <= inner) return Mat(Mat::Zero(q, q));
          const Vec n = u / d;
          const double g = p.dot(u);
          return Mat(l.d2(d) * g * (n * n.transpose()) +
                     (l.d1(d) * g / d) * (Mat::Identity(q, q) - n * n.transpose()) +
                     l.d1(d) * (n * p.transpose() + p * n.transpose()));
        },
        Smoothness::C2);
  }

  Vec zeta_coeff(const Vec& z, const Vec& y) const {
    if (collection == 1) return y - z;
    return Vec(ell.value((y - z).norm()) * (y - z));
  }

 private:
  // Largest xi-bar Hessian eigenvalue over a radial scan, with 5% margin.
  // A 2-D ray sees both the radial and the tangential eigenvalue.
  double scan_kappa_xi() const {
    const ScalarField f = [&] {
      PenaltyFamily tmp = *this;
      tmp.kappa_xi = 1.0;
      return tmp.xi(Vec::Zero(2));
    }();
    double worst = 1.0;
    for (int i = 1; i <= 4000; ++i) {
      const double r = (Rpp + 1.0) * i / 4000.0;
      Eigen::SelfAdjointEigenSolver<Mat> es(f.hessian(vec2(r, 0.0)));
      worst = std::max(worst, es.eigenvalues().maxCoeff());
    }
    return 1.05 * worst;
  }
};

// Xi^0 = xi_{z0} + zeta_{z0,p}; Xi = Xi^0 + xi_{z1}. Eq-level assembly with
// derivatives built by the sum rule.
struct XiBundle {
  Vec z0, z1, p;
  PenaltyFamily family;

  ScalarField xi0_field() const {
    return linear_combination(1.0, family.xi(z0), 1.0, family.zeta(z0, p));
  }
  ScalarField xi_field() const {
    return linear_combination(1.0, xi0_field(), 1.0, family.xi(z1));
  }
};

inline double eval_xi(const XiBundle& b, const Vec& y) { return b.xi_field().value(y); }

// Upper/lower cut-off: identity below/above M, constant beyond M+2 / M-2,
// C^1 monotone bridge.
struct CutOff {
  double M = 0.0;
  bool upper = true;

  double value(double r) const {
    if (upper) {
      if (r <= M) return r;
      if (r >= M + 2) return M + 1;
      const double t = (r - M) / 2;
      return M + 2 * t - t * t;
    }
    return -CutOff{-M, true}.value(-r);
  }
  double d1(double r) const {
    if (upper) {
      if (r <= M) return 1.0;
      if (r >= M + 2) return 0.0;
      return 1.0 - (r - M) / 2;
    }
    return CutOff{-M, true}.d1(-r);
  }
  double d2(double r) const {
    if (upper) {
      if (r <= M || r >= M + 2) return 0.0;
      return -0.5;
    }
    return -CutOff{-M, true}.d2(-r);
  }
};

// Omega composed with f; chain-rule derivatives where f provides them.
inline ScalarField apply_cutoff(const CutOff& c, const ScalarField& f) {
  ScalarField::GradFn g;
  ScalarField::HessFn h;
  if (f.has_gradient()) g = [c, f](const Vec& x) { return Vec(c.d1(f.value(x)) * f.gradient(x)); };
  if (f.has_gradient() && f.has_hessian())
    h = [c, f](const Vec& x) {
      const double v = f.value(x);
      const Vec gr = f.gradient(x);
      return Mat(c.d2(v) * (gr * gr.transpose()) + c.d1(v) * f.hessian(x));
    };
  ScalarField out(f.dim(), [c, f](const Vec& x) { return c.value(f.value(x)); }, g, h,
                  std::min(f.smoothness(), Smoothness::C1));
  if (c.upper) {
    out.bound_above = c.M + 1;
    if (f.bound_below) out.bound_below = std::min(*f.bound_below, c.M + 1);
  } else {
    out.bound_below = c.M - 1;
    if (f.bound_above) out.bound_above = std::max(*f.bound_above, c.M - 1);
  }
  return out;
}

// Def 2.19 items (a)-(d) for a family, certified on clouds.
inline CheckReport certify_family(const PenaltyFamily& family, const SampleCloud& K,
                                  std::uint64_t seed = 23) {
  CheckReport rep;
  rep.name = "penalty_family";
  require(K.size() > 0, "certify_family: empty cloud");
  const int q = K.dim();
  DeterministicRng rng(seed);

  std::vector<Vec> centers;
  for (size_t i = 0; i < std::min<size_t>(K.size(), 8); ++i)
    centers.push_back(K.points()[i * K.size() / std::min<size_t>(K.size(), 8)]);

  double worst_linearity = 0, worst_semiconcavity = 0, worst_positivity = 0;
  double worst_domination = kPlusInfinity;
  for (const Vec& z : centers) {
    const ScalarField xi = family.xi(z);
    // (c) positivity away from z, zero at z.
    worst_positivity = std::max(worst_positivity, std::abs(xi.value(z)));
    for (const Vec& y : K.points()) {
      const double d = distance(y, z);
      if (d > 1e-9 && xi.value(y) <= 0)
        rep.fail(-xi.value(y), "item (c): xi not positive at y=" + describe_point(y));
      // (a) linearity of zeta in B_R(z).
      if (d < family.R) {
        Vec p(q);
        for (int i = 0; i < q; ++i) p[i] = rng.uniform(-1, 1);
        const double gap = std::abs(family.zeta(z, p).value(y) - p.dot(y - z));
        worst_linearity = std::max(worst_linearity, gap);
        if (gap > 1e-10)
          rep.fail(gap, "item (a): zeta not linear near z at y=" + describe_point(y));
      }
      // (d) domination outside B_R(z): inf over |p|<=1 equals xi - |coeff|.
      if (d >= family.R) {
        const double inf_p = xi.value(y) - family.zeta_coeff(z, y).norm();
        worst_domination = std::min(worst_domination, inf_p);
        if (inf_p <= 0)
          rep.fail(-inf_p, "item (d): xi + zeta not dominating at y=" + describe_point(y));
      }
    }
    // (b) semi-concavity with constant kappa_xi (midpoint test on segments).
    for (int t = 0; t < 200; ++t) {
      const Vec a = K.points()[t % K.size()];
      const Vec b = K.points()[(t * 7 + 3) % K.size()];
      const Vec m = 0.5 * (a + b);
      const double lhs = xi.value(m);
      const double rhs =
          0.5 * xi.value(a) + 0.5 * xi.value(b) - family.kappa_xi / 8.0 * distance_sq(a, b);
      if (lhs < rhs - 1e-10) {
        worst_semiconcavity = std::max(worst_semiconcavity, rhs - lhs);
        rep.fail(rhs - lhs, "item (b): semi-concavity fails on segment a=" + describe_point(a) +
                                " b=" + describe_point(b));
      }
    }
  }
  rep.stats["worst_linearity_gap"] = worst_linearity;
  rep.stats["worst_semiconcavity_defect"] = worst_semiconcavity;
  rep.stats["domination_margin"] = worst_domination;
  rep.stats["kappa_xi"] = family.kappa_xi;
  return rep;
}

}  // namespace hjcp
