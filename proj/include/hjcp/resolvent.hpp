// Exact resolvent solves f - lambda H f = h on finite state spaces, via
// direct solves, Howard policy iteration, and alternating best response for
// Isaacs forms, plus the comparison-principle verifications.
#pragma once

#include "hjcp/operators.hpp"
#include "hjcp/report.hpp"

#include <Eigen/LU>

#include <numeric>

namespace hjcp {

// States with, per control pair, a generator matrix with nonnegative
// off-diagonal entries and row sums <= 0 (sub-Markov rows at a truncation
// boundary are allowed), a cost table, lambda, and data h.
struct FiniteProblem {
  std::vector<Vec> states;
  std::vector<std::vector<Mat>> generator;    // [i1][i2], n x n
  std::vector<std::vector<Vec>> cost;         // [i1][i2], per state; empty = 0
  double lambda = 1.0;
  Vec h;

  int n_states() const { return static_cast<int>(states.size()); }
  int n_theta1() const { return static_cast<int>(generator.size()); }
  int n_theta2() const { return generator.empty() ? 0 : static_cast<int>(generator[0].size()); }

  double cost_at(int i1, int i2, int s) const {
    if (cost.empty()) return 0.0;
    return cost[i1][i2][s];
  }

  void validate() const {
    require(lambda > 0, "FiniteProblem: lambda must be positive");
    const int n = n_states();
    require(n > 0, "FiniteProblem: empty state space");
    require(h.size() == n, "FiniteProblem: h length mismatch");
    require(n_theta1() >= 1 && n_theta2() >= 1, "FiniteProblem: control grids must be nonempty");
    for (const auto& row : generator) {
      require(static_cast<int>(row.size()) == n_theta2(), "FiniteProblem: ragged generator table");
      for (const Mat& L : row) {
        require(L.rows() == n && L.cols() == n, "FiniteProblem: generator size mismatch");
        for (int i = 0; i < n; ++i) {
          double rowsum = 0;
          for (int j = 0; j < n; ++j) {
            if (i != j)
              require(L(i, j) >= -1e-12, "FiniteProblem: negative off-diagonal entry");
            rowsum += L(i, j);
          }
          require(rowsum <= 1e-9, "FiniteProblem: positive row sum (not sub-Markov)");
        }
      }
    }
    if (!cost.empty()) {
      require(static_cast<int>(cost.size()) == n_theta1(), "FiniteProblem: cost table shape");
      for (const auto& row : cost) {
        require(static_cast<int>(row.size()) == n_theta2(), "FiniteProblem: cost table shape");
        for (const Vec& c : row) require(c.size() == n, "FiniteProblem: cost vector length");
      }
    }
  }

  // H_discrete f at the current f: exact sup-inf over the control grids.
  // Infinite-cost pairs are absent controls; a theta1 without admissible
  // responses drops out of the sup.
  Vec apply_hamiltonian(const Vec& f) const {
    const int n = n_states();
    Vec out(n);
    for (int s = 0; s < n; ++s) {
      double best = -kPlusInfinity;
      bool any_theta1 = false;
      for (int i1 = 0; i1 < n_theta1(); ++i1) {
        double inner = kPlusInfinity;
        bool any = false;
        for (int i2 = 0; i2 < n_theta2(); ++i2) {
          const double c = cost_at(i1, i2, s);
          if (c == kPlusInfinity) continue;
          any = true;
          inner = std::min(inner, generator[i1][i2].row(s).dot(f) - c);
        }
        if (!any) continue;
        any_theta1 = true;
        best = std::max(best, inner);
      }
      require(any_theta1, "FiniteProblem: every control pair has infinite cost at a state");
      out[s] = best;
    }
    return out;
  }
};

struct ResolventSolution {
  Vec f;
  double residual = 0;
  int iterations = 0;
  std::vector<int> policy1, policy2;  // optimizing controls per state
};

namespace detail {

inline Vec solve_fixed_policy(const FiniteProblem& p, const std::vector<int>& pi1,
                              const std::vector<int>& pi2) {
  const int n = p.n_states();
  Mat A = Mat::Identity(n, n);
  Vec rhs = p.h;
  for (int s = 0; s < n; ++s) {
    A.row(s) -= p.lambda * p.generator[pi1[s]][pi2[s]].row(s);
    rhs[s] -= p.lambda * p.cost_at(pi1[s], pi2[s], s);
  }
  Eigen::PartialPivLU<Mat> lu(A);
  Vec f = lu.solve(rhs);
  require(is_finite(f), "resolvent: singular policy system");
  return f;
}

inline double residual_of(const FiniteProblem& p, const Vec& f) {
  return (f - p.lambda * p.apply_hamiltonian(f) - p.h).cwiseAbs().maxCoeff();
}

}  // namespace detail

// Single-control direct solve of (I - lambda L) f = h - lambda I.
inline ResolventSolution solve_linear(const FiniteProblem& p) {
  p.validate();
  require(p.n_theta1() == 1 && p.n_theta2() == 1, "solve_linear: needs a single control pair");
  ResolventSolution sol;
  sol.policy1.assign(p.n_states(), 0);
  sol.policy2.assign(p.n_states(), 0);
  sol.f = detail::solve_fixed_policy(p, sol.policy1, sol.policy2);
  sol.residual = detail::residual_of(p, sol.f);
  sol.iterations = 1;
  require(sol.residual <= 1e-9, "solve_linear: residual above tolerance");
  return sol;
}

// Howard policy iteration for Bellman problems, alternating best response
// with a damped value-iteration fallback for Isaacs problems.
inline ResolventSolution solve_bellman_isaacs(const FiniteProblem& p, bool swap_order = false,
                                              bool check_order_independence = true) {
  p.validate();
  const int n = p.n_states();
  const int n1 = p.n_theta1(), n2 = p.n_theta2();
  if (n1 == 1 && n2 == 1) return solve_linear(p);

  ResolventSolution sol;
  std::vector<int> pi1(n, 0), pi2(n, 0);

  auto improve1 = [&](const Vec& f) {
    bool changed = false;
    for (int s = 0; s < n; ++s) {
      double best = -kPlusInfinity;
      int arg = pi1[s];
      for (int i1 = 0; i1 < n1; ++i1) {
        const double c = p.cost_at(i1, pi2[s], s);
        if (c == kPlusInfinity) continue;
        const double v = p.generator[i1][pi2[s]].row(s).dot(f) - c;
        if (v > best + 1e-13) {
          best = v;
          arg = i1;
        }
      }
      if (arg != pi1[s]) {
        pi1[s] = arg;
        changed = true;
      }
    }
    return changed;
  };
  auto improve2 = [&](const Vec& f) {
    bool changed = false;
    for (int s = 0; s < n; ++s) {
      double best = kPlusInfinity;
      int arg = pi2[s];
      for (int i2 = 0; i2 < n2; ++i2) {
        const double c = p.cost_at(pi1[s], i2, s);
        if (c == kPlusInfinity) continue;
        const double v = p.generator[pi1[s]][i2].row(s).dot(f) - c;
        if (v < best - 1e-13) {
          best = v;
          arg = i2;
        }
      }
      if (arg != pi2[s]) {
        pi2[s] = arg;
        changed = true;
      }
    }
    return changed;
  };

  const bool howard = (n2 == 1);
  Vec f = detail::solve_fixed_policy(p, pi1, pi2);
  bool converged = false;
  const int budget = 100;
  for (int round = 0; round < budget; ++round) {
    bool changed;
    if (swap_order) {
      changed = improve2(f);
      changed = improve1(f) || changed;
    } else {
      changed = improve1(f);
      changed = improve2(f) || changed;
    }
    const Vec prev = f;
    f = detail::solve_fixed_policy(p, pi1, pi2);
    if (howard) {
      // Howard values are monotone nondecreasing, pointwise.
      require((f - prev).minCoeff() >= -1e-9, "solve_bellman_isaacs: Howard value decreased");
    }
    sol.iterations = round + 1;
    if (!changed && detail::residual_of(p, f) <= 1e-9) {
      converged = true;
      break;
    }
  }

  if (!converged) {
    // Cycling: only legitimate when Isaacs' condition holds; otherwise the
    // game has no value and we refuse.
    double gap = 0;
    for (int s = 0; s < n; ++s) {
      double supinf = -kPlusInfinity, infsup = kPlusInfinity;
      for (int i1 = 0; i1 < n1; ++i1) {
        double inner = kPlusInfinity;
        for (int i2 = 0; i2 < n2; ++i2)
          inner = std::min(inner, p.generator[i1][i2].row(s).dot(f) - p.cost_at(i1, i2, s));
        supinf = std::max(supinf, inner);
      }
      for (int i2 = 0; i2 < n2; ++i2) {
        double inner = -kPlusInfinity;
        for (int i1 = 0; i1 < n1; ++i1)
          inner = std::max(inner, p.generator[i1][i2].row(s).dot(f) - p.cost_at(i1, i2, s));
        infsup = std::min(infsup, inner);
      }
      gap = std::max(gap, std::abs(infsup - supinf));
    }
    if (gap > 1e-7)
      throw std::runtime_error(
          "solve_bellman_isaacs: best-response cycling with nonzero Isaacs gap (interchange "
          "condition violated)");
    // Damped value iteration in uniformization form; contraction factor
    // lambda r / (1 + lambda r) per state.
    for (long it = 0; it < 2000000; ++it) {
      Vec next(n);
      for (int s = 0; s < n; ++s) {
        double best = -kPlusInfinity;
        bool any_theta1 = false;
        for (int i1 = 0; i1 < n1; ++i1) {
          double inner = kPlusInfinity;
          bool any = false;
          for (int i2 = 0; i2 < n2; ++i2) {
            const double c = p.cost_at(i1, i2, s);
            if (c == kPlusInfinity) continue;
            any = true;
            const Mat& L = p.generator[i1][i2];
            const double rate = -L(s, s);
            double off = L.row(s).dot(f) - L(s, s) * f[s];
            inner = std::min(inner,
                             (p.h[s] - p.lambda * c + p.lambda * off) / (1.0 + p.lambda * rate));
          }
          if (!any) continue;
          any_theta1 = true;
          best = std::max(best, inner);
        }
        require(any_theta1, "solve_bellman_isaacs: every control pair infinite at a state");
        next[s] = best;
      }
      const double delta = (next - f).cwiseAbs().maxCoeff();
      f = next;
      sol.iterations += 1;
      if (delta < 1e-13 && detail::residual_of(p, f) <= 1e-9) {
        converged = true;
        break;
      }
    }
    require(converged, "solve_bellman_isaacs: value iteration exhausted its budget");
  }

  sol.f = f;
  sol.policy1 = pi1;
  sol.policy2 = pi2;
  sol.residual = detail::residual_of(p, f);
  require(sol.residual <= 1e-9, "solve_bellman_isaacs: residual above tolerance");

  if (check_order_independence && n1 > 1 && n2 > 1) {
    ResolventSolution other = solve_bellman_isaacs(p, !swap_order, false);
    const double diff = (other.f - sol.f).cwiseAbs().maxCoeff();
    require(diff <= 1e-8,
            "solve_bellman_isaacs: sup-inf and inf-sup orders disagree (Isaacs violated)");
  }
  return sol;
}

inline ResolventSolution solve(const FiniteProblem& p) {
  if (p.n_theta1() == 1 && p.n_theta2() == 1) return solve_linear(p);
  return solve_bellman_isaacs(p);
}

// Sup-norm contraction: max(Rh1 - Rh2) <= max(h1 - h2), plus monotonicity
// for ordered pairs.
inline CheckReport verify_contraction(const FiniteProblem& base,
                                      const std::vector<std::pair<Vec, Vec>>& pairs,
                                      double tol = 1e-9) {
  CheckReport rep;
  rep.name = "contraction";
  int idx = 0;
  for (const auto& [h1, h2] : pairs) {
    FiniteProblem p1 = base, p2 = base;
    p1.h = h1;
    p2.h = h2;
    const Vec u = solve(p1).f;
    const Vec v = solve(p2).f;
    const double lhs = (u - v).maxCoeff();
    const double rhs = (h1 - h2).maxCoeff();
    rep.stats["max_excess"] = std::max(rep.stats["max_excess"], lhs - rhs);
    if (lhs > rhs + tol) rep.fail(lhs - rhs, "pair " + std::to_string(idx));
    if ((h1 - h2).maxCoeff() <= 0) {
      // h1 <= h2 implies Rh1 <= Rh2.
      const double mono = (u - v).maxCoeff();
      if (mono > tol) rep.fail(mono, "monotonicity, pair " + std::to_string(idx));
    }
    ++idx;
  }
  rep.stats["pairs"] = static_cast<double>(pairs.size());
  return rep;
}

struct StrictEstimateResult {
  CheckReport report;
  double c_V = 0;
  double C_eps = 0;
  std::vector<int> Khat;  // state indices
};

// Discrete Lyapunov constant sup_x sup_theta (L V)(x) - I.
inline double discrete_lyapunov_constant(const FiniteProblem& p, const Vec& V) {
  double c = -kPlusInfinity;
  for (int i1 = 0; i1 < p.n_theta1(); ++i1)
    for (int i2 = 0; i2 < p.n_theta2(); ++i2)
      for (int s = 0; s < p.n_states(); ++s)
        c = std::max(c, p.generator[i1][i2].row(s).dot(V) - p.cost_at(i1, i2, s));
  return c;
}

// Strict (Lyapunov-localised) comparison:
// max_K (Rh1 - Rh2) <= eps C_eps + max_{Khat}(h1 - h2) with
// Khat = {V <= (|u|+|v|)/eps + max_K V} and C_eps from the theorem formula.
inline StrictEstimateResult verify_strict_estimate(const FiniteProblem& base, const Vec& V,
                                                   const std::vector<int>& K, double eps,
                                                   const std::vector<std::pair<Vec, Vec>>& pairs,
                                                   double tol = 1e-9) {
  StrictEstimateResult res;
  res.report.name = "strict_estimate";
  require(eps > 0 && eps < 1, "verify_strict_estimate: eps must lie in (0,1)");
  require(V.size() == base.n_states(), "verify_strict_estimate: V length mismatch");
  require(V.minCoeff() >= -1e-12, "verify_strict_estimate: V must be nonnegative");
  require(!K.empty(), "verify_strict_estimate: K must be nonempty");
  res.c_V = discrete_lyapunov_constant(base, V);
  res.report.stats["c_V"] = res.c_V;

  double maxV_K = -kPlusInfinity;
  for (int s : K) maxV_K = std::max(maxV_K, V[s]);

  int idx = 0;
  for (const auto& [h1, h2] : pairs) {
    FiniteProblem p1 = base, p2 = base;
    p1.h = h1;
    p2.h = h2;
    const Vec u = solve(p1).f;
    const Vec v = solve(p2).f;
    const double nu = u.cwiseAbs().maxCoeff();
    const double nv = v.cwiseAbs().maxCoeff();
    const double level = (nu + nv) / eps + maxV_K;

    std::vector<int> khat;
    for (int s = 0; s < base.n_states(); ++s)
      if (V[s] <= level) khat.push_back(s);
    if (idx == 0) res.Khat = khat;

    double lhs = -kPlusInfinity, inf_term = kPlusInfinity;
    for (int s : K) {
      lhs = std::max(lhs, u[s] - v[s]);
      inf_term = std::min(inf_term, u[s] / (1 - eps) - v[s] / (1 + eps));
    }
    double rhs_data = -kPlusInfinity;
    for (int s : khat) rhs_data = std::max(rhs_data, h1[s] - h2[s]);

    const double C_eps = 2.0 / (1 - eps * eps) * (maxV_K + base.lambda * res.c_V) +
                         h1.cwiseAbs().maxCoeff() / (1 - eps) +
                         h2.cwiseAbs().maxCoeff() / (1 - eps) - inf_term;
    if (idx == 0) res.C_eps = C_eps;

    const double bound = eps * C_eps + rhs_data;
    res.report.stats["max_excess"] = std::max(res.report.stats["max_excess"], lhs - bound);
    if (lhs > bound + tol)
      res.report.fail(lhs - bound, "pair " + std::to_string(idx) + ": lhs=" + std::to_string(lhs) +
                                       " bound=" + std::to_string(bound));
    ++idx;
  }
  res.report.stats["pairs"] = static_cast<double>(pairs.size());
  res.report.stats["Khat_size"] = static_cast<double>(res.Khat.size());
  return res;
}

// Monotone (positivity-preserving) truncation of a continuous operator tree
// onto a tensor grid of radius `radius` and spacing `mesh`. Drift terms are
// upwinded, diffusions use the centred second difference, jump compensators
// are folded into the drift so every off-diagonal weight stays nonnegative;
// stencils leaving the grid leak mass (sub-Markov boundary rows).
struct DiscretizeOptions {
  double radius = 1.0;
  double mesh = 0.1;
  // Legendre control grid for the convex part: Hconv(p)=sup_t <t,p>-|t|^2/2,
  // sampled on [-control_radius, control_radius]^q with `controls` points per
  // axis. Zero keeps the problem linear (requires Hconv == 0).
  int controls = 0;
  double control_radius = 1.0;
};

struct DiscretizedProblem {
  FiniteProblem problem;
  std::vector<Vec> theta1;  // control labels (empty when linear)
  std::vector<int> interior;  // indices with conservative rows
};

inline DiscretizedProblem discretize(const OperatorPtr& op, int q, double lambda, const Vec& hvals,
                                     const DiscretizeOptions& opt) {
  require(q >= 1 && q <= 2, "discretize: tensor grids supported for q in {1,2}");
  const int m = static_cast<int>(std::round(opt.radius / opt.mesh));
  const int per_axis = 2 * m + 1;
  const int n = q == 1 ? per_axis : per_axis * per_axis;

  DiscretizedProblem out;
  auto index_of = [&](const std::vector<int>& idx) {
    int lin = 0;
    for (int a = 0; a < q; ++a) lin = lin * per_axis + (idx[a] + m);
    return lin;
  };
  std::vector<std::vector<int>> multi(n);
  for (int a0 = -m; a0 <= m; ++a0) {
    if (q == 1) {
      multi[index_of({a0})] = {a0};
    } else {
      for (int a1 = -m; a1 <= m; ++a1) multi[index_of({a0, a1})] = {a0, a1};
    }
  }
  for (int s = 0; s < n; ++s) {
    Vec x(q);
    for (int a = 0; a < q; ++a) x[a] = multi[s][a] * opt.mesh;
    out.problem.states.push_back(x);
  }

  // Flatten the operator tree; Isaacs roots are not discretised here.
  std::vector<const DriftConvexOp*> drifts;
  std::vector<const DiffusionOp*> diffusions;
  std::vector<const JumpOp*> jumps;
  std::function<void(const OperatorSpec&)> collect = [&](const OperatorSpec& node) {
    if (const auto* d = std::get_if<DriftConvexOp>(&node.node))
      drifts.push_back(d);
    else if (const auto* di = std::get_if<DiffusionOp>(&node.node))
      diffusions.push_back(di);
    else if (const auto* j = std::get_if<JumpOp>(&node.node))
      jumps.push_back(j);
    else if (const auto* sum = std::get_if<std::vector<OperatorPtr>>(&node.node)) {
      for (const auto& t : *sum) collect(*t);
    } else {
      throw std::invalid_argument("discretize: Isaacs roots need explicit generator tables");
    }
  };
  collect(*op);

  std::vector<Vec> thetas;
  if (opt.controls > 0) {
    std::vector<double> axis;
    for (int i = 0; i < opt.controls; ++i)
      axis.push_back(opt.controls == 1
                         ? 0.0
                         : -opt.control_radius + 2.0 * opt.control_radius * i / (opt.controls - 1));
    if (q == 1) {
      for (double t : axis) thetas.push_back(vec1(t));
    } else {
      for (double t0 : axis)
        for (double t1 : axis) thetas.push_back(vec2(t0, t1));
    }
  } else {
    thetas.push_back(Vec::Zero(q));
  }
  out.theta1 = thetas;

  out.problem.generator.resize(thetas.size());
  out.problem.cost.resize(thetas.size());
  std::vector<bool> conservative(n, true);

  for (size_t ti = 0; ti < thetas.size(); ++ti) {
    Mat L = Mat::Zero(n, n);
    Vec cost = Vec::Zero(n);
    for (int s = 0; s < n; ++s) {
      const Vec& x = out.problem.states[s];
      Vec beff = Vec::Zero(q);
      for (const auto* d : drifts) beff += d->b(x);
      if (opt.controls > 0) {
        beff += thetas[ti];
        cost[s] = 0.5 * thetas[ti].squaredNorm();
      }
      // Jump atoms: pure jumps plus compensator folded into the drift.
      for (const auto* j : jumps) {
        const DiscreteMeasure mu = j->mu(x);
        for (const auto& a : mu.atoms()) {
          beff -= a.w * j->cut.chi(a.z) * a.z;
          std::vector<int> tgt = multi[s];
          bool inside = true;
          for (int ax = 0; ax < q; ++ax) {
            tgt[ax] += static_cast<int>(std::llround(a.z[ax] / opt.mesh));
            if (tgt[ax] < -m || tgt[ax] > m) inside = false;
          }
          bool moved = tgt != multi[s];
          if (!moved) continue;  // sub-mesh jump: compensator already applied
          if (inside) {
            L(s, index_of(tgt)) += a.w;
            L(s, s) -= a.w;
          } else {
            L(s, s) -= a.w;  // mass leaks through the truncation boundary
            conservative[s] = false;
          }
        }
      }
      // Upwind drift.
      for (int ax = 0; ax < q; ++ax) {
        const double rate = std::abs(beff[ax]) / opt.mesh;
        if (rate == 0) continue;
        std::vector<int> tgt = multi[s];
        tgt[ax] += beff[ax] > 0 ? 1 : -1;
        if (tgt[ax] >= -m && tgt[ax] <= m) {
          L(s, index_of(tgt)) += rate;
          L(s, s) -= rate;
        } else {
          L(s, s) -= rate;
          conservative[s] = false;
        }
      }
      // Centred diffusion.
      for (const auto* di : diffusions) {
        const Mat ss = di->squared(x);
        for (int ax = 0; ax < q; ++ax) {
          const double a2 = 0.5 * ss(ax, ax) / (opt.mesh * opt.mesh);
          if (a2 == 0) continue;
          for (int dir : {-1, 1}) {
            std::vector<int> tgt = multi[s];
            tgt[ax] += dir;
            if (tgt[ax] >= -m && tgt[ax] <= m) {
              L(s, index_of(tgt)) += a2;
              L(s, s) -= a2;
            } else {
              L(s, s) -= a2;
              conservative[s] = false;
            }
          }
        }
      }
    }
    out.problem.generator[ti].push_back(L);
    out.problem.cost[ti].push_back(cost);
  }
  out.problem.lambda = lambda;
  out.problem.h = (hvals.size() == n) ? hvals : Vec(Vec::Zero(n));
  for (int s = 0; s < n; ++s)
    if (conservative[s]) out.interior.push_back(s);
  out.problem.validate();
  return out;
}

}  // namespace hjcp
