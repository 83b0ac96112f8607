// Hamiltonians: drift + convex first-order parts, diffusions, jump operators
// with finite Levy measures, their sums, and Bellman/Isaacs combinators with a
// cost functional. Sampled certification of the structural hypotheses lives
// here too.
#pragma once

#include "hjcp/funcspace.hpp"
#include "hjcp/report.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <variant>

namespace hjcp {

// Smooth non-increasing profile l with l = 1 near 0 and l(r) = 0 for r >= 1.
// chi_{B_1(0)}(z) = l(|z|). Default: C^1 smoothstep, 1 on [0,1/2], 0 on [1,oo).
class CutProfile {
 public:
  using Fn = std::function<double(double)>;

  CutProfile() : fn_(default_fn()), inner_(0.5) {}
  CutProfile(Fn fn, double inner_radius) : fn_(std::move(fn)), inner_(inner_radius) { validate(); }

  double operator()(double r) const { return fn_(r); }
  double chi(const Vec& z) const { return fn_(z.norm()); }
  double inner_radius() const { return inner_; }

  static Fn default_fn() {
    return [](double r) {
      if (r <= 0.5) return 1.0;
      if (r >= 1.0) return 0.0;
      const double t = (r - 0.5) / 0.5;
      return 1.0 - (3 * t * t - 2 * t * t * t);
    };
  }

 private:
  void validate() const {
    require(inner_ > 0, "CutProfile: needs l = 1 on a neighbourhood of 0");
    for (int i = 0; i <= 200; ++i) {
      const double r = 2.0 * i / 200.0;
      const double v = fn_(r);
      require(v >= -1e-12 && v <= 1 + 1e-12, "CutProfile: values must lie in [0,1]");
      if (r <= inner_) require(v >= 1 - 1e-12, "CutProfile: must equal 1 on [0,inner]");
      if (r >= 1.0) require(std::abs(v) <= 1e-12, "CutProfile: must vanish on [1,oo)");
    }
  }

  Fn fn_;
  double inner_;
};

// Weight controlling jump measures near 0 and at infinity:
// W(z) = chi(z)|z|^2 + (1-chi(z)) log(1+|z|^2).
inline double levy_weight(const Vec& z, const CutProfile& cut = CutProfile()) {
  const double n2 = z.squaredNorm();
  const double c = cut(std::sqrt(n2));
  return c * n2 + (1 - c) * std::log1p(n2);
}

// Finite nonnegative atom list representing a jump measure; no mass at the
// origin (measures are identified modulo mass at 0).
class DiscreteMeasure {
 public:
  struct Atom {
    Vec z;
    double w;
  };

  DiscreteMeasure() = default;
  explicit DiscreteMeasure(int dim) : dim_(dim) {}

  static DiscreteMeasure from_atoms(std::vector<Atom> atoms) {
    require(!atoms.empty(), "DiscreteMeasure: empty atom list; use DiscreteMeasure(dim)");
    DiscreteMeasure m(static_cast<int>(atoms.front().z.size()));
    for (auto& a : atoms) m.add(a.z, a.w);
    return m;
  }

  void add(const Vec& z, double w) {
    require(dim_ == 0 || z.size() == dim_, "DiscreteMeasure: dimension mismatch");
    require(is_finite(z) && is_finite(w), "DiscreteMeasure: non-finite atom");
    require(w >= 0, "DiscreteMeasure: negative weight");
    require(z.norm() > 0, "DiscreteMeasure: atom at origin");
    if (dim_ == 0) dim_ = static_cast<int>(z.size());
    atoms_.push_back({z, w});
  }

  const std::vector<Atom>& atoms() const { return atoms_; }
  int dim() const { return dim_; }
  double total_mass() const {
    double s = 0;
    for (const auto& a : atoms_) s += a.w;
    return s;
  }

  double integrate(const std::function<double(const Vec&)>& g) const {
    double s = 0;
    for (const auto& a : atoms_) s += a.w * g(a.z);
    return s;
  }

  double w_integral(const CutProfile& cut = CutProfile()) const {
    return integrate([&](const Vec& z) { return levy_weight(z, cut); });
  }

 private:
  int dim_ = 0;
  std::vector<Atom> atoms_;
};

// B f(x) = <b(x), grad f(x)> + Hconv(grad f(x)); the deterministic part.
struct DriftConvexOp {
  std::function<Vec(const Vec&)> b;
  std::function<double(const Vec&)> Hconv;  // convex in p
  std::optional<double> one_sided_lipschitz;
  std::optional<double> linear_growth;  // c_b with |b(x)| <= c_b/2 (1+|x|)

  double bfield(const Vec& x, const Vec& p) const { return b(x).dot(p) + Hconv(p); }

  double eval(const ScalarField& f, const Vec& x) const {
    require(f.has_gradient(), "DriftConvexOp: field must carry a gradient");
    return bfield(x, f.gradient(x));
  }
};

// A f(x) = 1/2 Tr(Sigma Sigma^T(x) D^2 f(x)).
struct DiffusionOp {
  std::function<Mat(const Vec&)> sigma;
  std::optional<double> lipschitz;
  std::optional<double> linear_growth;

  Mat squared(const Vec& x) const {
    Mat s = sigma(x);
    Mat ss = s * s.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(ss);
    require(es.eigenvalues().minCoeff() >= -1e-10,
            "DiffusionOp: Sigma Sigma^T not positive semi-definite");
    return ss;
  }

  double eval(const ScalarField& f, const Vec& x) const {
    require(f.has_hessian(), "DiffusionOp: field must carry a hessian");
    return 0.5 * (squared(x) * f.hessian(x)).trace();
  }
};

// A f(x) = sum_i w_i [f(x+z_i) - f(x) - chi(z_i) <z_i, grad f(x)>].
struct JumpOp {
  std::function<DiscreteMeasure(const Vec&)> mu;
  CutProfile cut;

  double eval(const ScalarField& f, const Vec& x) const {
    const DiscreteMeasure m = mu(x);
    const double fx = f.value(x);
    bool needs_gradient = false;
    for (const auto& a : m.atoms())
      if (cut.chi(a.z) != 0.0) needs_gradient = true;
    Vec g;
    if (needs_gradient) {
      require(f.has_gradient(), "JumpOp: field must carry a gradient (compensated atoms)");
      g = f.gradient(x);
    }
    double s = 0;
    for (const auto& a : m.atoms()) {
      double term = f.value(x + a.z) - fx;
      const double c = cut.chi(a.z);
      if (c != 0.0) term -= c * a.z.dot(g);
      s += a.w * term;
    }
    return s;
  }
};

// I : E x Theta1 x Theta2 -> (-oo, +oo], on finite control grids.
struct CostFunctional {
  std::function<double(const Vec&, int, int)> cost;  // by grid index
  std::optional<double> modulus_scale;

  double operator()(const Vec& x, int i1, int i2) const {
    const double v = cost ? cost(x, i1, i2) : 0.0;
    require(!(v == -kPlusInfinity) && !std::isnan(v), "CostFunctional: must not return -inf/NaN");
    return v;
  }
};

struct OperatorSpec;
using OperatorPtr = std::shared_ptr<const OperatorSpec>;

// Composable Hamiltonian tree. Leaves are Drift/Diffusion/Jump; Sum adds;
// Isaacs takes exact sup-inf over finite control grids of components minus
// cost.
struct OperatorSpec {
  struct Isaacs {
    std::vector<Vec> theta1, theta2;                 // control labels
    std::vector<std::vector<OperatorPtr>> component;  // [i1][i2] -> A+B part
    CostFunctional cost;
  };

  std::variant<DriftConvexOp, DiffusionOp, JumpOp, std::vector<OperatorPtr>, Isaacs> node;

  static OperatorPtr drift(DriftConvexOp op) {
    return std::make_shared<OperatorSpec>(OperatorSpec{std::move(op)});
  }
  static OperatorPtr diffusion(DiffusionOp op) {
    return std::make_shared<OperatorSpec>(OperatorSpec{std::move(op)});
  }
  static OperatorPtr jump(JumpOp op) {
    return std::make_shared<OperatorSpec>(OperatorSpec{std::move(op)});
  }
  static OperatorPtr sum(std::vector<OperatorPtr> terms) {
    return std::make_shared<OperatorSpec>(OperatorSpec{std::move(terms)});
  }
  static OperatorPtr isaacs(Isaacs node) {
    require(!node.theta1.empty() && !node.theta2.empty(),
            "OperatorSpec: Isaacs grids must be nonempty");
    require(node.component.size() == node.theta1.size(), "OperatorSpec: component table shape");
    for (const auto& row : node.component)
      require(row.size() == node.theta2.size(), "OperatorSpec: component table shape");
    return std::make_shared<OperatorSpec>(OperatorSpec{std::move(node)});
  }
};

// H f(x) by leaf formulas; Isaacs nodes as exact sup-inf over the grids.
inline double eval(const OperatorSpec& op, const ScalarField& f, const Vec& x);

inline double eval(const OperatorPtr& op, const ScalarField& f, const Vec& x) {
  require(op != nullptr, "eval: null operator");
  return eval(*op, f, x);
}

inline double eval(const OperatorSpec& op, const ScalarField& f, const Vec& x) {
  require(is_finite(x), "eval: non-finite point");
  struct Visitor {
    const ScalarField& f;
    const Vec& x;
    double operator()(const DriftConvexOp& o) const { return o.eval(f, x); }
    double operator()(const DiffusionOp& o) const { return o.eval(f, x); }
    double operator()(const JumpOp& o) const { return o.eval(f, x); }
    double operator()(const std::vector<OperatorPtr>& terms) const {
      double s = 0;
      for (const auto& t : terms) s += eval(t, f, x);
      return s;
    }
    double operator()(const OperatorSpec::Isaacs& node) const {
      double best = -kPlusInfinity;
      bool any_theta1 = false;
      for (size_t i1 = 0; i1 < node.theta1.size(); ++i1) {
        double inner = kPlusInfinity;
        bool any = false;
        for (size_t i2 = 0; i2 < node.theta2.size(); ++i2) {
          const double c = node.cost(x, static_cast<int>(i1), static_cast<int>(i2));
          if (c == kPlusInfinity) continue;  // absent control pair
          any = true;
          inner = std::min(inner, eval(node.component[i1][i2], f, x) - c);
        }
        if (!any) continue;  // theta1 without admissible responses is absent
        any_theta1 = true;
        best = std::max(best, inner);
      }
      require(any_theta1, "Isaacs node: every control pair has infinite cost at a point");
      const double v = best;
      require(is_finite(v), "eval: non-finite Isaacs value");
      return v;
    }
  };
  const double v = std::visit(Visitor{f, x}, op.node);
  require(is_finite(v), "eval: non-finite leaf value");
  return v;
}

// Local semi-monotonicity of the first-order part:
// B(x, a(x-x')) - B(x', a(x-x')) <= omega(a d^2(x,x') + d(x,x')).
inline CheckReport check_semi_monotone(const DriftConvexOp& op, const SampleCloud& K,
                                       const std::vector<double>& alphas, double tol = 1e-6) {
  CheckReport rep;
  rep.name = "semi_monotone";
  require(K.size() > 0, "check_semi_monotone: empty cloud");
  for (double a : alphas) require(a > 1, "check_semi_monotone: alphas must exceed 1");

  std::vector<std::pair<double, double>> samples;
  double worst_s = 0;
  std::string worst_witness;
  const auto& pts = K.points();
  for (size_t i = 0; i < pts.size(); ++i) {
    for (size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      const Vec& x = pts[i];
      const Vec& xp = pts[j];
      const double d2 = distance_sq(x, xp);
      const double d = std::sqrt(d2);
      for (double a : alphas) {
        const Vec p = a * (x - xp);
        const double lhs = op.bfield(x, p) - op.bfield(xp, p);
        const double r = a * d2 + d;
        samples.emplace_back(r, lhs);
        if (lhs > worst_s) {
          worst_s = lhs;
          worst_witness = "x=" + describe_point(x) + " x'=" + describe_point(xp) +
                          " alpha=" + std::to_string(a);
        }
      }
    }
  }
  EnvelopeFit fit = fit_envelope(std::move(samples));
  record_envelope(rep, fit);
  rep.stats["max_lhs"] = worst_s;
  if (fit.value_at_zero > tol) rep.fail(fit.value_at_zero, worst_witness);
  return rep;
}

// Max |sup-inf - inf-sup| gap of A+B-I over the cloud.
inline CheckReport check_isaacs(const OperatorSpec& op, const ScalarField& f,
                                const SampleCloud& K) {
  CheckReport rep;
  rep.name = "isaacs";
  const auto* node = std::get_if<OperatorSpec::Isaacs>(&op.node);
  require(node != nullptr, "check_isaacs: operator root must be an Isaacs node");
  double max_gap = 0;
  for (const Vec& x : K.points()) {
    const size_t n1 = node->theta1.size(), n2 = node->theta2.size();
    Mat payoff(n1, n2);
    for (size_t i1 = 0; i1 < n1; ++i1)
      for (size_t i2 = 0; i2 < n2; ++i2) {
        const double c = node->cost(x, static_cast<int>(i1), static_cast<int>(i2));
        payoff(i1, i2) = (c == kPlusInfinity)
                             ? -kPlusInfinity
                             : eval(node->component[i1][i2], f, x) - c;
      }
    const double supinf = [&] {
      double best = -kPlusInfinity;
      for (size_t i1 = 0; i1 < n1; ++i1) {
        double inner = kPlusInfinity;
        for (size_t i2 = 0; i2 < n2; ++i2)
          if (payoff(i1, i2) > -kPlusInfinity) inner = std::min(inner, payoff(i1, i2));
        best = std::max(best, inner);
      }
      return best;
    }();
    const double infsup = [&] {
      double best = kPlusInfinity;
      for (size_t i2 = 0; i2 < n2; ++i2) {
        double inner = -kPlusInfinity;
        bool any = false;
        for (size_t i1 = 0; i1 < n1; ++i1)
          if (payoff(i1, i2) > -kPlusInfinity) {
            inner = std::max(inner, payoff(i1, i2));
            any = true;
          }
        if (any) best = std::min(best, inner);
      }
      return best;
    }();
    const double gap = std::abs(infsup - supinf);
    if (gap > max_gap) {
      max_gap = gap;
      rep.witness = "x=" + describe_point(x);
    }
  }
  rep.stats["max_gap"] = max_gap;
  if (max_gap > 1e-9) {
    rep.passed = false;
    rep.worst = max_gap;
  }
  return rep;
}

namespace detail {

// sup over control pairs of (A+B)V(x) - I(x,.), i.e. the Lyapunov integrand.
inline double lyapunov_integrand(const OperatorSpec& op, const ScalarField& V, const Vec& x) {
  if (const auto* node = std::get_if<OperatorSpec::Isaacs>(&op.node)) {
    double best = -kPlusInfinity;
    for (size_t i1 = 0; i1 < node->theta1.size(); ++i1)
      for (size_t i2 = 0; i2 < node->theta2.size(); ++i2) {
        const double c = node->cost(x, static_cast<int>(i1), static_cast<int>(i2));
        if (c == kPlusInfinity) continue;
        best = std::max(best, eval(node->component[i1][i2], V, x) - c);
      }
    return best;
  }
  return eval(op, V, x);
}

}  // namespace detail

struct LyapunovEstimate {
  double c_V = 0;
  bool plateaued = false;
  Vec argmax;
  CheckReport report;
};

// Sampled c_V = sup_x sup_theta {(A+B)V(x) - I}; nested clouds of radius 2^k
// with plateau detection on the running sup.
inline LyapunovEstimate lyapunov_bound(const OperatorSpec& op, const ScalarField& V,
                                       const SampleCloud& K, int max_scale = 10,
                                       int points_per_scale = 256, std::uint64_t seed = 17) {
  require(V.has_gradient() && V.has_hessian(), "lyapunov_bound: V needs gradient and hessian");
  LyapunovEstimate est;
  est.report.name = "lyapunov";
  double sup = -kPlusInfinity;
  Vec arg;
  for (const Vec& x : K.points()) {
    const double v = detail::lyapunov_integrand(op, V, x);
    if (v > sup) {
      sup = v;
      arg = x;
    }
  }
  double prev_sup = sup, prev_prev = sup;
  const int q = K.dim();
  for (int k = 0; k <= max_scale; ++k) {
    SampleCloud shell =
        SampleCloud::uniform_ball(Vec::Zero(q), std::pow(2.0, k), points_per_scale, seed + k);
    for (const Vec& x : shell.points()) {
      const double v = detail::lyapunov_integrand(op, V, x);
      if (v > sup) {
        sup = v;
        arg = x;
      }
    }
    prev_prev = prev_sup;
    prev_sup = sup;
    if (k >= 2) {
      const double rel = std::abs(prev_sup - prev_prev) / (1.0 + std::abs(prev_sup));
      est.plateaued = rel < 1e-6;
    }
  }
  est.c_V = sup;
  est.argmax = arg;
  est.report.stats["c_V"] = sup;
  est.report.stats["plateaued"] = est.plateaued ? 1.0 : 0.0;
  if (!est.plateaued) est.report.notes.push_back("running sup has not plateaued on nested clouds");
  est.report.witness = "argmax=" + describe_point(arg);
  return est;
}

// W-integrability, uniform bound, and sigma_W-continuity of x -> mu_x along
// neighbouring cloud points, tested against a fixed battery in C_W.
inline CheckReport check_measure_family(const std::function<DiscreteMeasure(const Vec&)>& mu,
                                        const SampleCloud& K, const CutProfile& cut = CutProfile(),
                                        double uniform_bound = 1e6, double tol = 1e-6) {
  CheckReport rep;
  rep.name = "measure_family";
  require(K.size() > 0, "check_measure_family: empty cloud");
  const int q = K.dim();

  std::vector<std::function<double(const Vec&)>> battery;
  battery.push_back([&](const Vec& z) { return levy_weight(z, cut); });
  battery.push_back([&](const Vec& z) { return levy_weight(z, cut) / (1.0 + z.squaredNorm()); });
  for (int i = 0; i < q; ++i)
    battery.push_back(
        [&cut, i](const Vec& z) { return levy_weight(z, cut) * std::tanh(z[i]); });

  double sup_w = 0, sup_standing = 0;
  std::vector<std::pair<Vec, std::vector<double>>> pairings;
  for (const Vec& x : K.points()) {
    const DiscreteMeasure m = mu(x);
    const double wi = m.w_integral(cut);
    sup_w = std::max(sup_w, wi);
    if (!is_finite(wi) || wi > uniform_bound) {
      rep.fail(wi, "x=" + describe_point(x) + " W-integral=" + std::to_string(wi));
    }
    // The standing integrability pairing for state-dependent families,
    // sampled on the cloud (its global validity is not certified).
    const double standing = m.integrate([&x](const Vec& z) {
      return std::log1p((0.5 * z.squaredNorm() + x.dot(z)) / (1.0 + 0.5 * x.squaredNorm()));
    });
    sup_standing = std::max(sup_standing, standing);
    if (!is_finite(standing) || standing > uniform_bound) {
      rep.fail(standing, "x=" + describe_point(x) + " standing integral diverges");
    }
    std::vector<double> vals;
    for (const auto& g : battery) vals.push_back(m.integrate(g));
    pairings.emplace_back(x, std::move(vals));
  }
  rep.stats["sup_W_integral"] = sup_w;
  rep.stats["sup_standing_integral"] = sup_standing;
  rep.notes.push_back("standing integrability checked on the cloud only");

  // Continuity: pairings at neighbouring points, envelope in d(x,x').
  std::vector<std::pair<double, double>> samples;
  double worst_jump = 0;
  std::string worst_w;
  for (size_t i = 0; i < pairings.size(); ++i) {
    for (size_t j = i + 1; j < pairings.size(); ++j) {
      const double d = distance(pairings[i].first, pairings[j].first);
      double jump = 0;
      for (size_t k = 0; k < pairings[i].second.size(); ++k)
        jump = std::max(jump, std::abs(pairings[i].second[k] - pairings[j].second[k]));
      samples.emplace_back(d, jump);
      if (d < 0.25 && jump > worst_jump) {
        worst_jump = jump;
        worst_w = "x=" + describe_point(pairings[i].first) +
                  " x'=" + describe_point(pairings[j].first);
      }
    }
  }
  if (samples.size() >= 4) {
    EnvelopeFit fit = fit_envelope(std::move(samples));
    rep.stats["continuity_envelope_at_zero"] = fit.value_at_zero;
    if (fit.value_at_zero > tol) rep.fail(fit.value_at_zero, worst_w);
  }
  return rep;
}

}  // namespace hjcp
