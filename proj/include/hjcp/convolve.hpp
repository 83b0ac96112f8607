// Sup- and inf-convolutions over sampled domains with tracked optimizers, and
// the property battery for them.
#pragma once

#include "hjcp/funcspace.hpp"
#include "hjcp/report.hpp"

#include <map>

namespace hjcp {

// P^a[u](y) = max over the domain cloud of u(x) - (a/2) d^2(x,y), sharpened by
// a three-point parabolic polish along coordinate axes when u is C^2. The
// optimizer is recorded; ties break to the lexicographically smallest point.
class ConvolutionField {
 public:
  enum class Kind { Sup, Inf };

  struct Result {
    double value;
    Vec argopt;
  };

  ConvolutionField(Kind kind, ScalarField base, double alpha, SampleCloud domain)
      : kind_(kind),
        base_(std::move(base)),
        alpha_(alpha),
        domain_(std::move(domain)),
        memo_(std::make_shared<std::map<std::vector<double>, Result>>()) {
    require(alpha_ > 1, "ConvolutionField: alpha must exceed 1");
    require(domain_.size() > 0, "ConvolutionField: empty domain");
    mesh_ = domain_.mesh_estimate();
  }

  Kind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  const SampleCloud& domain() const { return domain_; }
  double mesh() const { return mesh_; }
  const ScalarField& base() const { return base_; }

  Result at(const Vec& y) const {
    std::vector<double> key(y.data(), y.data() + y.size());
    auto it = memo_->find(key);
    if (it != memo_->end()) return it->second;
    Result r = compute(y);
    memo_->emplace(std::move(key), r);
    return r;
  }

  double value(const Vec& y) const { return at(y).value; }
  Vec argopt(const Vec& y) const { return at(y).argopt; }

  // View as a plain field (value only; probes use finite differences).
  ScalarField as_field() const {
    auto self = *this;
    return ScalarField(domain_.dim(), [self](const Vec& y) { return self.value(y); },
                       Smoothness::C0);
  }

 private:
  static bool lex_less(const Vec& a, const Vec& b) {
    for (int i = 0; i < a.size(); ++i) {
      if (a[i] < b[i] - 1e-15) return true;
      if (a[i] > b[i] + 1e-15) return false;
    }
    return false;
  }

  double objective(const Vec& x, const Vec& y) const {
    const double pen = 0.5 * alpha_ * distance_sq(x, y);
    return kind_ == Kind::Sup ? base_.value(x) - pen : -(base_.value(x) + pen);
  }

  Result compute(const Vec& y) const {
    double best = -kPlusInfinityLocal();
    Vec arg;
    for (const Vec& x : domain_.points()) {
      const double v = objective(x, y);
      if (v > best + 1e-12 || (std::abs(v - best) <= 1e-12 && (arg.size() == 0 || lex_less(x, arg)))) {
        best = v;
        arg = x;
      }
    }
    if (base_.smoothness() >= Smoothness::C2 && mesh_ > 0) {
      double h = mesh_;
      for (int round = 0; round < 3; ++round) {
        for (int i = 0; i < arg.size(); ++i) {
          Vec xp = arg, xm = arg;
          xp[i] += h;
          xm[i] -= h;
          const double fp = objective(xp, y), f0 = objective(arg, y), fm = objective(xm, y);
          const double denom = fp - 2 * f0 + fm;
          if (denom < -1e-300) {
            double step = 0.5 * h * (fm - fp) / denom;
            step = std::max(-h, std::min(h, step));
            Vec cand = arg;
            cand[i] += step;
            if (objective(cand, y) > f0) arg = cand;
          }
        }
        h *= 0.25;
      }
      best = std::max(best, objective(arg, y));
    }
    const double value = kind_ == Kind::Sup ? best : -best;
    if (base_.bound_below && base_.bound_above) {
      const double norm = std::max(std::abs(*base_.bound_below), std::abs(*base_.bound_above));
      require(std::abs(value) <= norm + 1e-12,
              "ConvolutionField: norm bound |P[u]| <= |u| violated");
    }
    return Result{value, arg};
  }

  static double kPlusInfinityLocal() { return std::numeric_limits<double>::infinity(); }

  Kind kind_;
  ScalarField base_;
  double alpha_;
  SampleCloud domain_;
  double mesh_ = 0;
  // Copies share the memo; computation of new probes is serialized by the
  // single-threaded evaluation contract.
  std::shared_ptr<std::map<std::vector<double>, Result>> memo_;
};

inline ConvolutionField sup_convolve(const ScalarField& u, double alpha,
                                     const SampleCloud& domain) {
  return ConvolutionField(ConvolutionField::Kind::Sup, u, alpha, domain);
}

inline ConvolutionField inf_convolve(const ScalarField& v, double alpha,
                                     const SampleCloud& domain) {
  return ConvolutionField(ConvolutionField::Kind::Inf, v, alpha, domain);
}

inline double sup_norm_on(const ScalarField& f, const SampleCloud& cloud) {
  if (f.bound_below && f.bound_above)
    return std::max(std::abs(*f.bound_below), std::abs(*f.bound_above));
  double s = 0;
  for (const Vec& x : cloud.points()) s = std::max(s, std::abs(f.value(x)));
  return s;
}

// Laws (a)-(e) of the convolution battery on probe points.
inline CheckReport check_convolution_laws(const ScalarField& u, const ScalarField& v,
                                          const std::vector<double>& alphas,
                                          const SampleCloud& domain, const SampleCloud& probe) {
  CheckReport rep;
  rep.name = "convolution_laws";
  require(!alphas.empty(), "check_convolution_laws: need alphas");
  for (size_t i = 1; i < alphas.size(); ++i)
    require(alphas[i] > alphas[i - 1], "check_convolution_laws: alphas must increase");

  const double mesh = domain.mesh_estimate();
  const double tol = 1e-9 + 10 * mesh * mesh;
  const double norm_u = sup_norm_on(u, domain);
  const double norm_v = sup_norm_on(v, domain);

  std::vector<ConvolutionField> sups, infs;
  for (double a : alphas) {
    sups.push_back(sup_convolve(u, a, domain));
    infs.push_back(inf_convolve(v, a, domain));
  }

  for (const Vec& y : probe.points()) {
    for (size_t k = 0; k < alphas.size(); ++k) {
      const double a = alphas[k];
      const auto rs = sups[k].at(y);
      const auto ri = infs[k].at(y);
      // (a) norm bounds.
      if (std::abs(rs.value) > norm_u + tol)
        rep.fail(std::abs(rs.value) - norm_u, "law (a) sup at y=" + describe_point(y));
      if (std::abs(ri.value) > norm_v + tol)
        rep.fail(std::abs(ri.value) - norm_v, "law (a) inf at y=" + describe_point(y));
      // (b) optimizer gap bounds.
      const double gap_s = 0.5 * a * distance_sq(rs.argopt, y) - (u.value(rs.argopt) - u.value(y));
      if (gap_s > tol) rep.fail(gap_s, "law (b) sup at y=" + describe_point(y));
      const double gap_i = 0.5 * a * distance_sq(ri.argopt, y) - (v.value(y) - v.value(ri.argopt));
      if (gap_i > tol) rep.fail(gap_i, "law (b) inf at y=" + describe_point(y));
      // (c) monotone in alpha.
      if (k > 0) {
        if (rs.value > sups[k - 1].value(y) + tol)
          rep.fail(rs.value - sups[k - 1].value(y), "law (c) sup at y=" + describe_point(y));
        if (ri.value < infs[k - 1].value(y) - tol)
          rep.fail(infs[k - 1].value(y) - ri.value, "law (c) inf at y=" + describe_point(y));
      }
      // Pointwise sandwich P_alpha[v] <= v and u <= P^alpha[u], mesh-scaled.
      const double tol_point = (1 + a) * mesh + tol;
      if (u.value(y) - rs.value > tol_point)
        rep.fail(u.value(y) - rs.value, "pointwise u <= P^alpha[u] at y=" + describe_point(y));
      if (ri.value - v.value(y) > tol_point)
        rep.fail(ri.value - v.value(y), "pointwise P_alpha[v] <= v at y=" + describe_point(y));
    }
  }

  // (d) semi-convexity with constant alpha: midpoint test on probe pairs.
  const auto& pts = probe.points();
  for (size_t k = 0; k < alphas.size(); ++k) {
    const double a = alphas[k];
    for (size_t i = 0; i + 1 < pts.size(); i += 2) {
      const Vec& pa = pts[i];
      const Vec& pb = pts[i + 1];
      const Vec m = 0.5 * (pa + pb);
      const double defect = sups[k].value(m) - 0.5 * sups[k].value(pa) - 0.5 * sups[k].value(pb) -
                            a / 8.0 * distance_sq(pa, pb);
      if (defect > tol) rep.fail(defect, "law (d) sup midpoint");
      const double defect_i = -infs[k].value(m) + 0.5 * infs[k].value(pa) +
                              0.5 * infs[k].value(pb) - a / 8.0 * distance_sq(pa, pb);
      if (defect_i > tol) rep.fail(defect_i, "law (d) inf midpoint");
    }
  }

  // (e) derivative identity at probes where the FD gradient is stable.
  int stable = 0;
  for (size_t k = 0; k < alphas.size(); ++k) {
    const double a = alphas[k];
    const double tol_e = std::max(1e-4, 10 * mesh) * (1 + a);
    const ScalarField ps = sups[k].as_field();
    const double h = std::max(1e-6, mesh);
    for (const Vec& y : probe.points()) {
      const Vec g1 = fd_gradient(ps, y, h);
      const Vec g2 = fd_gradient(ps, y, h / 2);
      if ((g1 - g2).norm() > 0.1 * (1 + g1.norm())) continue;  // unstable point
      ++stable;
      const Vec expected = a * (sups[k].argopt(y) - y);
      const double err = (g2 - expected).norm();
      if (err > tol_e) rep.fail(err, "law (e) at y=" + describe_point(y));
    }
  }
  rep.stats["stable_gradient_probes"] = stable;
  rep.stats["mesh"] = mesh;
  return rep;
}

}  // namespace hjcp
