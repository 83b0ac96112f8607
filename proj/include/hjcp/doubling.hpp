// The doubling-of-variables engine: Lambda_alpha assembly, the alpha-schedule
// optimizer search with the Jensen perturbation, test-function construction
// with cut-off constants, the Hamiltonian-gap diagnostic, and the
// strict-comparison constants.
#pragma once

#include "hjcp/convolve.hpp"
#include "hjcp/couplings.hpp"
#include "hjcp/penalty.hpp"

#include <deque>
#include <functional>

namespace hjcp {

struct DoublingProblem {
  ScalarField u, v;  // bounded; u upper-, v lower-semicontinuous (declared)
  Containment containment;
  PenaltyFamily family;
  double eps = 0.1;
  double phi = 0.01;
  OperatorPtr H;
  CouplingPtr Hhat;  // coupling of the stochastic part (used by check runs)
  double lambda = 1.0;
  ScalarField h1, h2;
  SampleCloud K;       // compact of interest
  SampleCloud domain;  // optimization / convolution support
  // Optional ladder of enlarged domains for the boundary-retry path.
  std::function<SampleCloud(int)> grow_domain;

  double norm_u = 0, norm_v = 0;

  void finalize_norms() {
    norm_u = sup_norm_on(u, domain);
    norm_v = sup_norm_on(v, domain);
    require(eps > 0 && eps < 1, "DoublingProblem: eps must lie in (0,1)");
    require(phi > 0 && phi <= 1, "DoublingProblem: phi must lie in (0,1]");
    require(lambda > 0, "DoublingProblem: lambda must be positive");
  }
};

// Lambda_alpha(y,y') = u-term - v-term - (alpha/2) d^2 - containment terms.
struct LambdaField {
  const DoublingProblem* prob;
  const ConvolutionField* Pu;
  const ConvolutionField* Pv;
  double alpha;

  double operator()(const Vec& y, const Vec& yp) const {
    const double e = prob->eps;
    return Pu->value(y) / (1 - e) - Pv->value(yp) / (1 + e) -
           0.5 * alpha * distance_sq(y, yp) -
           e / (1 - e) * (1 - prob->phi) * prob->containment.V.value(y) -
           e / (1 + e) * (1 - prob->phi) * prob->containment.V.value(yp);
  }
};

inline ScalarField assemble_lambda(const DoublingProblem& prob, const ConvolutionField& Pu,
                                   const ConvolutionField& Pv, double alpha) {
  const int q = prob.domain.dim();
  LambdaField lam{&prob, &Pu, &Pv, alpha};
  return ScalarField(2 * q,
                     [lam, q](const Vec& w) { return lam(w.head(q), w.tail(q)); },
                     Smoothness::C0);
}

struct JensenResult {
  Vec p1, p2;
  Vec x1, y1;           // perturbed global maximizer
  double value = 0;     // phi_p(x1, y1)
  double sup_phi = 0;   // phi(x0, y0)
  int candidate = -1;   // accepted sweep index
  double hessian_instability = 0;
};

// Proposition-A.1-style perturbation: deterministic low-discrepancy sweep of
// B_eta(0)^2, candidates ranked by a two-scale FD Hessian stability score,
// first acceptable candidate wins. Acceptance requires the perturbed
// optimizer to stay strictly inside B_eta(x0) x B_eta(y0), a stable FD
// Hessian, and the Corollary-A.2 sandwich.
inline JensenResult jensen_perturb(const ScalarField& phi_field, const Vec& x0, const Vec& y0,
                                   const PenaltyFamily& family, double eta, double eps1,
                                   double eps2, double kappa_declared, double slack = 1e-9) {
  require(eta > 0 && eps1 > 0 && eps2 > 0, "jensen_perturb: eta, eps1, eps2 must be positive");
  require(1.0 - (eps1 + eps2) * family.kappa_xi > 0,
          "jensen_perturb: semi-convexity premise 1 - (eps1+eps2)kappa_xi > 0 violated");
  const int q = static_cast<int>(x0.size());
  require(phi_field.dim() == 2 * q, "jensen_perturb: phi must live on E x E");

  auto phi = [&](const Vec& a, const Vec& b) {
    Vec w(2 * q);
    w.head(q) = a;
    w.tail(q) = b;
    return phi_field.value(w);
  };

  // Spot-check the declared semi-convexity on short segments around the
  // optimizer: phi(m) <= (phi(a)+phi(b))/2 + kappa d^2(a,b)/8.
  {
    DeterministicRng rng(101);
    for (int t = 0; t < 16; ++t) {
      Vec da(q), db(q);
      for (int i = 0; i < q; ++i) {
        da[i] = rng.uniform(-eta, eta);
        db[i] = rng.uniform(-eta, eta);
      }
      const Vec a1 = x0 + da, b1 = y0 + db;
      const Vec a2 = x0 - da, b2 = y0 - db;
      const double lhs = phi(x0, y0);
      const double rhs = 0.5 * phi(a1, b1) + 0.5 * phi(a2, b2) +
                         kappa_declared / 8.0 *
                             (distance_sq(a1, a2) + distance_sq(b1, b2)) +
                         1e-9;
      if (lhs > rhs + kappa_declared * eta * eta) {
        // Midpoint inequality can only fail this grossly if the declared
        // constant is wrong.
        throw std::runtime_error("jensen_perturb: semi-convexity premise violated on probes");
      }
    }
  }

  const double sup_phi = phi(x0, y0);

  struct Candidate {
    Vec p1, p2;
    int index;
  };
  std::vector<Candidate> sweep;
  sweep.push_back({Vec::Zero(q), Vec::Zero(q), 0});
  static const std::uint64_t primes[8] = {2, 3, 5, 7, 11, 13, 17, 19};
  for (int k = 1; k < 128; ++k) {
    Vec p1(q), p2(q);
    for (int i = 0; i < q; ++i) {
      p1[i] = (2.0 * halton(static_cast<std::uint64_t>(k), primes[i % 8]) - 1.0) * 0.9 * eta;
      p2[i] =
          (2.0 * halton(static_cast<std::uint64_t>(k), primes[(i + q) % 8]) - 1.0) * 0.9 * eta;
    }
    if (p1.norm() >= eta) p1 *= 0.999 * eta / p1.norm();
    if (p2.norm() >= eta) p2 *= 0.999 * eta / p2.norm();
    sweep.push_back({p1, p2, k});
  }

  struct Scored {
    JensenResult res;
    bool interior = false;
    bool sandwich = false;
    double score = kPlusInfinity;
  };
  std::vector<Scored> scored;
  scored.reserve(sweep.size());

  for (const auto& cand : sweep) {
    const ScalarField xi1 = family.xi(x0);
    const ScalarField ze1 = family.zeta(x0, cand.p1);
    const ScalarField xi2 = family.xi(y0);
    const ScalarField ze2 = family.zeta(y0, cand.p2);
    auto phip = [&](const Vec& a, const Vec& b) {
      return phi(a, b) - eps1 * (xi1.value(a) + ze1.value(a)) -
             eps2 * (xi2.value(b) + ze2.value(b));
    };

    // Constrained coordinate ascent inside the eta-balls.
    Vec a = x0, b = y0;
    double best = phip(a, b);
    double step = 0.5 * eta;
    for (int round = 0; round < 24 && step > 1e-6 * eta; ++round) {
      bool improved = false;
      for (int i = 0; i < 2 * q; ++i) {
        for (int dir : {-1, 1}) {
          Vec a2 = a, b2 = b;
          if (i < q)
            a2[i] += dir * step;
          else
            b2[i - q] += dir * step;
          if ((a2 - x0).norm() > 0.999 * eta || (b2 - y0).norm() > 0.999 * eta) continue;
          const double v = phip(a2, b2);
          if (v > best + 1e-15) {
            a = a2;
            b = b2;
            best = v;
            improved = true;
          }
        }
      }
      if (!improved) step *= 0.5;
    }

    Scored sc;
    sc.res.p1 = cand.p1;
    sc.res.p2 = cand.p2;
    sc.res.x1 = a;
    sc.res.y1 = b;
    sc.res.value = best;
    sc.res.sup_phi = sup_phi;
    sc.res.candidate = cand.index;
    sc.interior = (a - x0).norm() < eta - 1e-12 && (b - y0).norm() < eta - 1e-12;
    sc.sandwich = best >= sup_phi - slack && best <= sup_phi + (eps1 + eps2) * eta + slack;

    // Two-scale FD Hessian agreement certifies numerical twice
    // differentiability at the perturbed optimizer. Sup-convolutions of
    // rough data are piecewise smooth, so the stable scale can sit well
    // below eta; walk a ladder of scales and keep the best agreement.
    Vec w(2 * q);
    w.head(q) = a;
    w.tail(q) = b;
    ScalarField phip_field(2 * q,
                           [phip, q](const Vec& ww) { return phip(ww.head(q), ww.tail(q)); },
                           Smoothness::C0);
    sc.score = kPlusInfinity;
    double h0 = 0.05 * eta;
    for (int ladder = 0; ladder < 4 && h0 >= 3e-6; ++ladder, h0 *= 0.25) {
      const Mat H1 = fd_hessian(phip_field, w, h0);
      const Mat H2 = fd_hessian(phip_field, w, 0.5 * h0);
      const double scale = 1.0 + H1.cwiseAbs().maxCoeff();
      sc.score = std::min(sc.score, (H1 - H2).cwiseAbs().maxCoeff() / scale);
      if (sc.score < 1e-3) break;
    }
    sc.res.hessian_instability = sc.score;
    scored.push_back(std::move(sc));
  }

  std::vector<size_t> order(scored.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t i, size_t j) { return scored[i].score < scored[j].score; });
  for (size_t oi : order) {
    const Scored& sc = scored[oi];
    if (sc.interior && sc.sandwich && sc.score < 1e-3) return sc.res;
  }

  std::string log = "jensen_perturb: no admissible p in a 128-candidate sweep;";
  log += " best_score=" + std::to_string(scored.empty() ? -1.0 : scored[order[0]].score);
  throw std::runtime_error(log);
}

struct TraceRow {
  double alpha = 0;
  Vec y0, y0p;  // optimizers of Lambda_alpha
  Vec p1, p2;   // Jensen shifts
  Vec y, yp;    // perturbed optimizers
  Vec x, xp;    // convolution argopts
  double sup_lambda = 0;
  double sup_lambda_hat = 0;
  double alpha_d2_y0 = 0;        // alpha d^2(y0, y0')
  double alpha_sum_dist_sq = 0;  // alpha (d(x,y)+d(y,y')+d(y',x'))^2
  double xi_sandwich_mid = 0;    // -eps1 Xi1^0(y) - eps2 Xi2^0(y')
  double xi_sandwich_hi = 0;     // phi 2 eps / ((1-eps^2) alpha)
  double hamiltonian_gap = 0;
  double gap_bound = 0;
  double jensen_instability = 0;
};

struct DoublingTrace {
  std::vector<TraceRow> rows;
  double c_V = 0;
  double C0_eps = 0;
  double C_eps_phi = 0;
  std::vector<std::string> flags;
};

struct TestFunctionPair {
  ScalarField f_dagger, f_ddagger;
  ScalarField fhat_dagger, fhat_ddagger;
  double M1 = 0, M2 = 0;
  double squeeze_defect = 0;  // worst violation of the squeeze on the cloud
};

namespace detail {

// C^2 radial bump supported on the annulus [r1, r2], equal to 1 only in the
// middle, vanishing to second order at both edges.
inline double annulus_bump(double d, double r1, double r2) {
  if (d <= r1 || d >= r2) return 0.0;
  const double u = 2.0 * (d - r1) / (r2 - r1);
  auto S = [](double t) {
    if (t <= 0) return 0.0;
    if (t >= 1) return 1.0;
    return 10 * t * t * t - 15 * t * t * t * t + 6 * t * t * t * t * t;
  };
  return u <= 1.0 ? S(u) : S(2.0 - u);
}

inline ScalarField fd_derivative_view(const ScalarField& f) {
  return ScalarField(
      f.dim(), [f](const Vec& x) { return f.value(x); },
      [f](const Vec& x) { return fd_gradient(f, x, fd_step(x)); },
      [f](const Vec& x) {
        Mat H = fd_hessian(f, x, 10 * fd_step(x));
        return Mat(0.5 * (H + H.transpose()));
      },
      Smoothness::C2);
}

}  // namespace detail

// Prop-5.3-style construction: smooth-squeeze surrogate (plateau field minus
// a small annulus bump), cut-off at the M1/M2 constants, then the convex
// combinations with V and Xi and the shifts to x-space.
inline TestFunctionPair build_test_functions(const DoublingProblem& prob,
                                             const ConvolutionField& Pu,
                                             const ConvolutionField& Pv, const TraceRow& row) {
  const double e = prob.eps, ph = prob.phi, alpha = row.alpha;
  const ScalarField& V = prob.containment.V;

  const XiBundle xi1{row.y0, row.y, row.p1, prob.family};
  const XiBundle xi2{row.y0p, row.yp, row.p2, prob.family};
  const ScalarField Xi1 = xi1.xi_field();
  const ScalarField Xi10 = xi1.xi0_field();
  const ScalarField Xi2 = xi2.xi_field();
  const ScalarField Xi20 = xi2.xi0_field();

  // Capture the convolution fields by value: copies share the memo and keep
  // the returned test functions self-contained.
  auto Pi10 = [Pu, V, Xi10, e, ph](const Vec& y) {
    return Pu.value(y) / (1 - e) - e / (1 - e) * (1 - ph) * V.value(y) -
           e / (1 - e) * ph * Xi10.value(y);
  };
  auto Pi20 = [Pv, V, Xi20, e, ph](const Vec& y) {
    return Pv.value(y) / (1 + e) + e / (1 + e) * (1 - ph) * V.value(y) +
           e / (1 + e) * ph * Xi20.value(y);
  };

  // The squeeze gap Pi1^0 - Pi1 equals (e phi/(1-e)) xi_{y_alpha}; half its
  // minimum over the annulus bounds the bump amplitude.
  const double r1 = 0.5 * prob.family.R, r2 = prob.family.R;
  const double min_gap_xi = 0.5 * r1 * r1;  // radial minimum of xi on [r1, r2]
  const double A1 = 0.5 * (e / (1 - e)) * ph * min_gap_xi;
  const double A2 = 0.5 * (e / (1 + e)) * ph * min_gap_xi;

  const Vec ya = row.y, yap = row.yp;
  ScalarField frak1(V.dim(),
                    [Pi10, ya, r1, r2, A1](const Vec& y) {
                      return Pi10(y) - A1 * detail::annulus_bump(distance(y, ya), r1, r2);
                    },
                    Smoothness::C2);
  ScalarField frak2(V.dim(),
                    [Pi20, yap, r1, r2, A2](const Vec& y) {
                      return Pi20(y) + A2 * detail::annulus_bump(distance(y, yap), r1, r2);
                    },
                    Smoothness::C2);

  double m1 = kPlusInfinity, inf_f2 = kPlusInfinity, sup_f1 = -kPlusInfinity,
         m2 = -kPlusInfinity;
  for (const Vec& y : prob.domain.points()) {
    const double v1 = frak1.value(y), v2 = frak2.value(y);
    m1 = std::min(m1, v1);
    sup_f1 = std::max(sup_f1, v1);
    m2 = std::max(m2, v2);
    inf_f2 = std::min(inf_f2, v2);
  }

  TestFunctionPair out;
  out.M1 = std::min(m1, frak1.value(ya) - (frak2.value(yap) - inf_f2) -
                            0.5 * alpha * distance_sq(ya, yap));
  out.M2 = std::max(m2, frak2.value(yap) + (sup_f1 - frak1.value(ya)) +
                            0.5 * alpha * distance_sq(ya, yap));

  const ScalarField fhat1 = apply_cutoff(CutOff{out.M1, false}, frak1);
  const ScalarField fhat2 = apply_cutoff(CutOff{out.M2, true}, frak2);

  auto fhat_dagger_value = [fhat1, V, Xi1, e, ph](const Vec& y) {
    return (1 - e) * fhat1.value(y) + e * (1 - ph) * V.value(y) + e * ph * Xi1.value(y);
  };
  auto fhat_ddagger_value = [fhat2, V, Xi2, e, ph](const Vec& y) {
    return (1 + e) * fhat2.value(y) - e * (1 - ph) * V.value(y) - e * ph * Xi2.value(y);
  };
  out.fhat_dagger =
      detail::fd_derivative_view(ScalarField(V.dim(), fhat_dagger_value, Smoothness::C2));
  out.fhat_ddagger =
      detail::fd_derivative_view(ScalarField(V.dim(), fhat_ddagger_value, Smoothness::C2));
  out.f_dagger = detail::fd_derivative_view(shifted(
      ScalarField(V.dim(), fhat_dagger_value, Smoothness::C2), Vec(row.x - row.y)));
  out.f_ddagger = detail::fd_derivative_view(shifted(
      ScalarField(V.dim(), fhat_ddagger_value, Smoothness::C2), Vec(row.xp - row.yp)));

  // Prop 5.3(b): P^alpha[u] <= fhat_dagger with equality at y_alpha,
  // mesh-scaled tolerance; mirrored for the inf-convolution.
  const double mesh = prob.domain.mesh_estimate();
  const double tol = 1e-9 + mesh * mesh;
  double worst = 0;
  for (const Vec& y : prob.domain.points()) {
    worst = std::max(worst, Pu.value(y) - fhat_dagger_value(y));
    worst = std::max(worst, fhat_ddagger_value(y) - Pv.value(y));
  }
  out.squeeze_defect = worst;
  if (worst > tol)
    throw std::runtime_error("build_test_functions: squeeze violated beyond tolerance (" +
                             std::to_string(worst) + ")");
  const double eq1 = std::abs(fhat_dagger_value(ya) - Pu.value(ya));
  const double eq2 = std::abs(fhat_ddagger_value(yap) - Pv.value(yap));
  if (std::max(eq1, eq2) > tol)
    throw std::runtime_error("build_test_functions: equality at the optimizer violated");

  // Gradient identities, checked against finite differences of the shifted
  // assemblies. Consistent with D P^alpha[u](y0) = alpha (x0 - y0).
  const double tol_grad = 1e-4 * (1 + alpha);
  const Vec g_dag = out.f_dagger.gradient(row.x);
  const Vec expect_dag = alpha * (row.x - row.y);
  if ((g_dag - expect_dag).norm() > tol_grad)
    throw std::runtime_error("build_test_functions: f_dagger gradient identity violated");
  const Vec g_ddag = out.f_ddagger.gradient(row.xp);
  const Vec expect_ddag = alpha * (row.yp - row.xp);
  if ((g_ddag - expect_ddag).norm() > tol_grad)
    throw std::runtime_error("build_test_functions: f_ddagger gradient identity violated");
  return out;
}

// H f_dagger(x_alpha)/(1-eps) - H f_ddagger(x'_alpha)/(1+eps).
inline double hamiltonian_gap(const DoublingProblem& prob, const TraceRow& row,
                              const TestFunctionPair& pair) {
  const double a = eval(prob.H, pair.f_dagger, row.x);
  const double b = eval(prob.H, pair.f_ddagger, row.xp);
  return a / (1 - prob.eps) - b / (1 + prob.eps);
}

namespace detail {

// sup over theta pairs of (A+B)(2 xi_z)(z) without the cost term, sampled
// over nested shells inside the K-hat sublevel set.
inline double xi_action_sup(const DoublingProblem& prob, double khat_level) {
  const int q = prob.domain.dim();
  double sup = -kPlusInfinity;
  auto eval_at = [&](const Vec& z) {
    const ScalarField xiz = linear_combination(2.0, prob.family.xi(z), 0.0,
                                               ScalarField::constant(q, 0.0));
    double val;
    if (const auto* node = std::get_if<OperatorSpec::Isaacs>(&prob.H->node)) {
      val = -kPlusInfinity;
      for (size_t i1 = 0; i1 < node->theta1.size(); ++i1)
        for (size_t i2 = 0; i2 < node->theta2.size(); ++i2)
          val = std::max(val, eval(node->component[i1][i2], xiz, z));
    } else {
      val = eval(prob.H, xiz, z);
    }
    sup = std::max(sup, val);
  };
  const double radius_cap =
      prob.containment.V.bound_below ? Containment::sublevel_radius(khat_level) : 1e4;
  for (int k = 0; k <= 12; ++k) {
    const double r = std::min(std::pow(2.0, k), radius_cap);
    SampleCloud shell = SampleCloud::uniform_ball(Vec::Zero(q), r, 64, 29 + k);
    for (const Vec& z : shell.points())
      if (prob.containment.V.value(z) <= khat_level) eval_at(z);
    if (std::pow(2.0, k) >= radius_cap) break;
  }
  eval_at(Vec::Zero(q));
  return sup;
}

}  // namespace detail

struct StrictBound {
  double khat_level = 0;
  double khat_radius = 0;  // closed form for the standard V, else NaN
  double C_eps = 0;
  double c_V = 0;
  std::map<std::string, double> components;
};

inline StrictBound strict_bound(const DoublingProblem& prob, double c_V) {
  StrictBound b;
  b.c_V = c_V;
  const double e = prob.eps;
  double supV_K = -kPlusInfinity, inf_comb = kPlusInfinity;
  for (const Vec& x : prob.K.points()) {
    supV_K = std::max(supV_K, prob.containment.V.value(x));
    inf_comb = std::min(inf_comb, prob.u.value(x) / (1 - e) - prob.v.value(x) / (1 + e));
  }
  b.khat_level = (prob.norm_u + prob.norm_v) / e + supV_K;
  b.khat_radius = Containment::sublevel_radius(b.khat_level);
  const double norm_h1 = sup_norm_on(prob.h1, prob.domain);
  const double norm_h2 = sup_norm_on(prob.h2, prob.domain);
  b.components["sup_V_K"] = supV_K;
  b.components["lambda_cV"] = prob.lambda * c_V;
  b.components["h1_norm_term"] = norm_h1 / (1 - e);
  b.components["h2_norm_term"] = norm_h2 / (1 - e);
  b.components["inf_combination"] = inf_comb;
  b.C_eps = 2.0 / (1 - e * e) * (supV_K + prob.lambda * c_V) + norm_h1 / (1 - e) +
            norm_h2 / (1 - e) - inf_comb;
  return b;
}

// Run the alpha schedule. Each row maximises Lambda_alpha over the working
// cloud, applies the Jensen perturbation with eta = 1/alpha, extracts the
// convolution argopts, and asserts the trace invariants on the fly.
inline DoublingTrace run_trace(DoublingProblem& prob, const std::vector<double>& schedule,
                               bool with_gap = true) {
  require(!schedule.empty(), "run_trace: empty schedule");
  for (size_t i = 0; i < schedule.size(); ++i) {
    require(schedule[i] > 1, "run_trace: alphas must exceed 1");
    if (i) require(schedule[i] > schedule[i - 1], "run_trace: schedule must increase");
  }
  prob.finalize_norms();
  const int q = prob.domain.dim();
  const double e = prob.eps, ph = prob.phi;

  DoublingTrace trace;
  const LyapunovEstimate lyap = lyapunov_bound(*prob.H, prob.containment.V, prob.K);
  trace.c_V = lyap.c_V;
  trace.C0_eps = 2.0 / (1 - e * e) * lyap.c_V;
  const double khat_level =
      (prob.norm_u + prob.norm_v) / e +
      [&] {
        double s = -kPlusInfinity;
        for (const Vec& x : prob.K.points()) s = std::max(s, prob.containment.V.value(x));
        return s;
      }();
  trace.C_eps_phi = 2.0 / (1 - e * e) * ph * detail::xi_action_sup(prob, khat_level);
  if (!lyap.plateaued) trace.flags.push_back("lyapunov sup did not plateau");
  trace.flags.push_back("test functions use the annulus-bump smooth-squeeze surrogate");

  double sup_K_uv = -kPlusInfinity, inf_comb_K = kPlusInfinity, supV_K = -kPlusInfinity;
  for (const Vec& x : prob.K.points()) {
    sup_K_uv = std::max(sup_K_uv, prob.u.value(x) - prob.v.value(x));
    inf_comb_K = std::min(inf_comb_K, prob.u.value(x) / (1 - e) - prob.v.value(x) / (1 + e));
    supV_K = std::max(supV_K, prob.containment.V.value(x));
  }

  double prev_sup_lambda = kPlusInfinity;
  SampleCloud domain = prob.domain;
  for (double alpha : schedule) {
    int grow = 0;
    while (true) {
      ConvolutionField Pu = sup_convolve(prob.u, alpha, domain);
      ConvolutionField Pv = inf_convolve(prob.v, alpha, domain);
      LambdaField lam{&prob, &Pu, &Pv, alpha};

      // Discrete maximization over cloud x cloud, separable precomputation.
      const auto& pts = domain.points();
      std::vector<double> au(pts.size()), bv(pts.size());
      for (size_t i = 0; i < pts.size(); ++i) {
        au[i] = Pu.value(pts[i]) / (1 - e) -
                e / (1 - e) * (1 - ph) * prob.containment.V.value(pts[i]);
        bv[i] = -Pv.value(pts[i]) / (1 + e) -
                e / (1 + e) * (1 - ph) * prob.containment.V.value(pts[i]);
      }
      double best = -kPlusInfinity;
      size_t bi = 0, bj = 0;
      for (size_t i = 0; i < pts.size(); ++i) {
        for (size_t j = 0; j < pts.size(); ++j) {
          const double v = au[i] + bv[j] - 0.5 * alpha * distance_sq(pts[i], pts[j]);
          if (v > best) {
            best = v;
            bi = i;
            bj = j;
          }
        }
      }
      Vec y0 = pts[bi], y0p = pts[bj];

      // Joint coordinate polish of Lambda.
      {
        double h = std::max(domain.mesh_estimate(), 1e-6);
        for (int round = 0; round < 4; ++round) {
          for (int i = 0; i < 2 * q; ++i) {
            Vec dy = Vec::Zero(q), dyp = Vec::Zero(q);
            if (i < q)
              dy[i] = h;
            else
              dyp[i - q] = h;
            const double f0 = lam(y0, y0p);
            const double fp = lam(y0 + dy, y0p + dyp);
            const double fm = lam(y0 - dy, y0p - dyp);
            const double denom = fp - 2 * f0 + fm;
            if (denom < -1e-300) {
              double stp = 0.5 * h * (fm - fp) / denom;
              stp = std::max(-h, std::min(h, stp));
              Vec y2 = y0 + (stp / h) * dy, y2p = y0p + (stp / h) * dyp;
              if (lam(y2, y2p) > f0) {
                y0 = y2;
                y0p = y2p;
              }
            }
          }
          h *= 0.25;
        }
      }

      // Boundary watch: optimizers within one mesh of the hull trigger an
      // enlarge-and-retry.
      bool on_boundary = false;
      {
        Vec lo = pts.front(), hi = pts.front();
        for (const Vec& p : pts) {
          lo = lo.cwiseMin(p);
          hi = hi.cwiseMax(p);
        }
        const double margin = 1.001 * std::max(domain.mesh_estimate(), 1e-12);
        for (int i = 0; i < q; ++i) {
          for (const Vec* w : {&y0, &y0p}) {
            if ((*w)[i] <= lo[i] + margin || (*w)[i] >= hi[i] - margin) on_boundary = true;
          }
        }
      }
      if (on_boundary) {
        require(grow < 3, "run_trace: optimizer pinned to the cloud boundary; domain too small");
        require(static_cast<bool>(prob.grow_domain),
                "run_trace: optimizer on cloud boundary and no growth ladder configured");
        domain = prob.grow_domain(++grow);
        continue;
      }

      TraceRow row;
      row.alpha = alpha;
      row.y0 = y0;
      row.y0p = y0p;
      row.sup_lambda = lam(y0, y0p);
      row.alpha_d2_y0 = alpha * distance_sq(y0, y0p);

      // Jensen perturbation with the Eq. (A.2) parameter choice.
      const double eta = 1.0 / alpha;
      const double eps1 = e * ph / (1 - e);
      const double eps2 = e * ph / (1 + e);
      const double kappa = (2.0 / (1 - e * e) + 0.5) * alpha +
                           2 * e / (1 - e * e) * (1 - ph) * prob.containment.kappa_V;
      const ScalarField lam_field = assemble_lambda(prob, Pu, Pv, alpha);
      const double mesh_slack = 1e-9 + domain.mesh_estimate() * domain.mesh_estimate();
      const JensenResult jr =
          jensen_perturb(lam_field, y0, y0p, prob.family, eta, eps1, eps2, kappa, mesh_slack);
      row.p1 = jr.p1;
      row.p2 = jr.p2;
      row.y = jr.x1;
      row.yp = jr.y1;
      row.sup_lambda_hat = jr.value;
      row.jensen_instability = jr.hessian_instability;

      const double mesh = domain.mesh_estimate();
      const double tol = 1e-9 + mesh * mesh;
      require(distance(row.y, row.y0) <= eta + mesh + 1e-12,
              "trace invariant: d(y_alpha, y_alpha0) <= 1/alpha violated");
      require(distance(row.yp, row.y0p) <= eta + mesh + 1e-12,
              "trace invariant: d(y'_alpha, y'_alpha0) <= 1/alpha violated");

      // Xi^0 sandwich (Cor A.2 arithmetic).
      const XiBundle xb1{row.y0, row.y, row.p1, prob.family};
      const XiBundle xb2{row.y0p, row.yp, row.p2, prob.family};
      row.xi_sandwich_mid =
          -eps1 * xb1.xi0_field().value(row.y) - eps2 * xb2.xi0_field().value(row.yp);
      row.xi_sandwich_hi = ph * 2 * e / ((1 - e * e) * alpha);
      require(row.xi_sandwich_mid >= -tol, "trace invariant: Xi^0 sandwich lower bound violated");
      require(row.xi_sandwich_mid <= row.xi_sandwich_hi + tol,
              "trace invariant: Xi^0 sandwich upper bound violated");

      // Eq. (5.14)-style sandwich for sup Lambda-hat.
      require(row.sup_lambda_hat >= row.sup_lambda - tol,
              "trace invariant: sup Lambda-hat below sup Lambda");
      require(row.sup_lambda_hat <= row.sup_lambda + row.xi_sandwich_hi + tol,
              "trace invariant: sup Lambda-hat above the Eq. (5.14) bound");

      // Monotone sup Lambda along the schedule.
      require(row.sup_lambda <= prev_sup_lambda + tol,
              "trace invariant: sup Lambda not nonincreasing in alpha");
      prev_sup_lambda = row.sup_lambda;

      row.x = Pu.argopt(row.y);
      row.xp = Pv.argopt(row.yp);
      const double sumd =
          distance(row.x, row.y) + distance(row.y, row.yp) + distance(row.yp, row.xp);
      row.alpha_sum_dist_sq = alpha * sumd * sumd;

      // Prop 5.1(i) estimate with the recorded o(1) surrogate.
      {
        const double c_eps_phi = 2.0 / (1 - e * e) * (1 - ph) * supV_K - inf_comb_K;
        const double o1 = ph * 2.0 / ((1 - e * e) * alpha);
        const double rhs = prob.u.value(row.x) / (1 - e) - prob.v.value(row.xp) / (1 + e) +
                           e * (c_eps_phi + o1);
        require(sup_K_uv <= rhs + 10 * tol + 1e-7,
                "trace invariant: Prop 5.1(i) estimate violated");
      }

      row.gap_bound = e * (trace.C0_eps + trace.C_eps_phi);
      if (with_gap) {
        const TestFunctionPair pair = build_test_functions(prob, Pu, Pv, row);
        row.hamiltonian_gap = hamiltonian_gap(prob, row, pair);
      }
      trace.rows.push_back(std::move(row));
      break;
    }
  }
  if (with_gap) {
    // Running liminf surrogate: the best gap seen along the schedule must
    // reach the epsilon-bound.
    double running = kPlusInfinity;
    for (const TraceRow& row : trace.rows) running = std::min(running, row.hamiltonian_gap);
    require(running <= e * (trace.C0_eps + trace.C_eps_phi),
            "trace invariant: running Hamiltonian-gap liminf above its epsilon bound");
  }
  return trace;
}

}  // namespace hjcp
