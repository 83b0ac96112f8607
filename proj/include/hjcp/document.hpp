// Problem-document ingestion: JSON schema -> operators, couplings, penalty
// families, clouds, resolvent problems, doubling problems. The schema is
// documented in docs/schema.md.
#pragma once

#include "hjcp/doubling.hpp"
#include "hjcp/expr.hpp"
#include "hjcp/resolvent.hpp"

#include <json.hpp>

#include <fstream>

namespace hjcp::doc {

using nlohmann::json;

class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

inline void expect(bool cond, const std::string& path, const std::string& what) {
  if (!cond) throw SchemaError(path + ": " + what);
}

inline Vec parse_vec(const json& j, const std::string& path) {
  expect(j.is_array(), path, "expected an array of numbers");
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    expect(j[i].is_number(), path, "expected numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

inline SampleCloud parse_cloud(const json& j, const std::string& path,
                               std::uint64_t default_seed) {
  expect(j.is_object() && j.contains("kind"), path, "cloud needs a kind");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "grid") {
    const Vec lo = parse_vec(j.at("lo"), path + ".lo");
    const Vec hi = parse_vec(j.at("hi"), path + ".hi");
    std::vector<int> counts;
    for (const auto& c : j.at("counts")) counts.push_back(c.get<int>());
    return SampleCloud::grid(lo, hi, counts);
  }
  if (kind == "ball") {
    const Vec center = parse_vec(j.at("center"), path + ".center");
    const double radius = j.at("radius").get<double>();
    const int count = j.at("count").get<int>();
    const std::uint64_t seed = j.value("seed", default_seed);
    return SampleCloud::uniform_ball(center, radius, count, seed);
  }
  if (kind == "explicit") {
    std::vector<Vec> pts;
    for (const auto& p : j.at("points")) pts.push_back(parse_vec(p, path + ".points"));
    return SampleCloud::explicit_points(std::move(pts));
  }
  throw SchemaError(path + ": unknown cloud kind '" + kind + "'");
}

// Expression-backed field; derivatives by the documented finite-difference
// step h = 1e-5 (1+|x|).
inline ScalarField field_from_expr(const std::string& src, int q,
                                   Smoothness s = Smoothness::C2) {
  const expr::Fn fn = expr::parse(src, q);
  ScalarField base(q, [fn](const Vec& x) { return fn(x); }, s);
  return ScalarField(
      q, [fn](const Vec& x) { return fn(x); },
      [base](const Vec& x) { return fd_gradient(base, x, fd_step(x)); },
      [base](const Vec& x) {
        Mat H = fd_hessian(base, x, 10 * fd_step(x));
        return Mat(0.5 * (H + H.transpose()));
      },
      s);
}

inline std::function<Vec(const Vec&)> vector_from_exprs(const std::vector<std::string>& srcs,
                                                        int q) {
  std::vector<expr::Fn> fns;
  for (const auto& s : srcs) fns.push_back(expr::parse(s, q));
  return [fns](const Vec& x) {
    Vec out(fns.size());
    for (size_t i = 0; i < fns.size(); ++i) out[i] = fns[i](x);
    return out;
  };
}

inline DriftConvexOp parse_drift(const json& j, int q, const std::string& path) {
  DriftConvexOp op;
  std::vector<std::string> bexprs;
  for (const auto& s : j.at("b")) bexprs.push_back(s.get<std::string>());
  expect(static_cast<int>(bexprs.size()) == q, path + ".b", "drift must have q components");
  op.b = vector_from_exprs(bexprs, q);
  const json hj = j.value("hconv", json{{"kind", "zero"}});
  const std::string kind = hj.at("kind").get<std::string>();
  if (kind == "zero") {
    op.Hconv = [](const Vec&) { return 0.0; };
  } else if (kind == "half_square") {
    op.Hconv = [](const Vec& p) { return 0.5 * p.squaredNorm(); };
  } else if (kind == "expr") {
    const expr::Fn fn = expr::parse(hj.at("expr").get<std::string>(), q, 'p');
    op.Hconv = [fn](const Vec& p) { return fn(p); };
  } else {
    throw SchemaError(path + ".hconv: unknown kind '" + kind + "'");
  }
  if (j.contains("one_sided_lipschitz")) op.one_sided_lipschitz = j.at("one_sided_lipschitz");
  return op;
}

inline DiffusionOp parse_diffusion(const json& j, int q, const std::string& path) {
  DiffusionOp op;
  std::vector<std::vector<expr::Fn>> rows;
  const json& sig = j.at("sigma");
  expect(sig.is_array() && static_cast<int>(sig.size()) == q, path + ".sigma",
         "sigma must be a q x q expression matrix");
  for (const auto& r : sig) {
    std::vector<expr::Fn> row;
    expect(static_cast<int>(r.size()) == q, path + ".sigma", "sigma must be square");
    for (const auto& e : r) row.push_back(expr::parse(e.get<std::string>(), q));
    rows.push_back(std::move(row));
  }
  op.sigma = [rows, q](const Vec& x) {
    Mat m(q, q);
    for (int i = 0; i < q; ++i)
      for (int j2 = 0; j2 < q; ++j2) m(i, j2) = rows[i][j2](x);
    return m;
  };
  return op;
}

inline JumpOp parse_jump(const json& j, int q, const std::string& path) {
  JumpOp op;
  op.cut = CutProfile();
  if (j.contains("atoms")) {
    DiscreteMeasure m(q);
    for (const auto& a : j.at("atoms"))
      m.add(parse_vec(a.at("z"), path + ".atoms.z"), a.at("w").get<double>());
    op.mu = [m](const Vec&) { return m; };
  } else if (j.contains("eta")) {
    std::vector<std::string> exprs;
    for (const auto& s : j.at("eta")) exprs.push_back(s.get<std::string>());
    expect(static_cast<int>(exprs.size()) == q, path + ".eta", "eta must have q components");
    auto eta = vector_from_exprs(exprs, q);
    op.mu = [eta, q](const Vec& x) {
      DiscreteMeasure m(q);
      const Vec z = eta(x);
      if (z.norm() > 0) m.add(z, 1.0);
      return m;
    };
  } else {
    throw SchemaError(path + ": jump needs 'atoms' or 'eta'");
  }
  return op;
}

inline OperatorPtr parse_operator(const json& j, int q, const std::string& path) {
  expect(j.is_object() && j.contains("kind"), path, "operator node needs a kind");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "sum") {
    std::vector<OperatorPtr> terms;
    int i = 0;
    for (const auto& t : j.at("terms"))
      terms.push_back(parse_operator(t, q, path + ".terms[" + std::to_string(i++) + "]"));
    return OperatorSpec::sum(std::move(terms));
  }
  if (kind == "drift") return OperatorSpec::drift(parse_drift(j, q, path));
  if (kind == "diffusion") return OperatorSpec::diffusion(parse_diffusion(j, q, path));
  if (kind == "jump") return OperatorSpec::jump(parse_jump(j, q, path));
  throw SchemaError(path + ": unknown operator kind '" + kind + "'");
}

// Build a coupling tree for the stochastic part of `op` (diffusion and jump
// leaves); drift leaves belong to the semi-monotone part and are skipped.
inline CouplingPtr build_coupling(const json& spec, const OperatorPtr& op, int q,
                                  const std::string& path) {
  const std::string kind = spec.value("kind", "synchronous");
  std::vector<CouplingPtr> parts;
  std::function<void(const OperatorSpec&)> walk = [&](const OperatorSpec& node) {
    if (const auto* d = std::get_if<DiffusionOp>(&node.node)) {
      parts.push_back(CouplingSpec::sync_diffusion(*d));
    } else if (const auto* jmp = std::get_if<JumpOp>(&node.node)) {
      if (kind == "synchronous") {
        parts.push_back(CouplingSpec::synchronous_jumps(*jmp));
      } else if (kind == "independent") {
        auto mu = jmp->mu;
        parts.push_back(CouplingSpec::jump_coupling(
            *jmp, [mu](const Vec& x, const Vec& xp) {
              return CoupledMeasure::independent(mu(x), mu(xp));
            }));
      } else if (kind == "map") {
        std::vector<std::string> exprs;
        for (const auto& s : spec.at("eta")) exprs.push_back(s.get<std::string>());
        auto eta = vector_from_exprs(exprs, q);
        parts.push_back(CouplingSpec::jump_coupling(
            *jmp, [eta, q](const Vec& x, const Vec& xp) {
              CoupledMeasure pi(q);
              const Vec z1 = eta(x), z2 = eta(xp);
              if (z1.norm() > 0 || z2.norm() > 0) pi.add(z1, z2, 1.0);
              return pi;
            }));
      } else if (kind == "table") {
        CoupledMeasure pi(q);
        for (const auto& a : spec.at("atoms"))
          pi.add(parse_vec(a.at("z1"), path + ".atoms.z1"),
                 parse_vec(a.at("z2"), path + ".atoms.z2"), a.at("w").get<double>());
        parts.push_back(
            CouplingSpec::jump_coupling(*jmp, [pi](const Vec&, const Vec&) { return pi; }));
      } else {
        throw SchemaError(path + ": unknown coupling kind '" + kind + "'");
      }
    } else if (const auto* sum = std::get_if<std::vector<OperatorPtr>>(&node.node)) {
      for (const auto& t : *sum) walk(*t);
    }
  };
  walk(*op);
  expect(!parts.empty(), path, "operator has no stochastic part to couple");
  if (parts.size() == 1) return parts.front();
  return CouplingSpec::sum(std::move(parts));
}

inline PenaltyFamily parse_penalty(const json& j) {
  if (!j.is_object() || j.value("collection", 1) == 1) return PenaltyFamily::collection1();
  return PenaltyFamily::collection2(j.value("R", 2.5), j.value("Rp", 3.5), j.value("Rpp", 4.5));
}

// Deterministic battery of C^2 fields with analytic derivatives: quadratics,
// tanh ridges, gaussian bumps.
inline std::vector<ScalarField> field_battery(int q, int count, std::uint64_t seed) {
  std::vector<ScalarField> fields;
  DeterministicRng rng(seed);
  for (int k = 0; k < count; ++k) {
    const int kind = k % 3;
    if (kind == 0) {
      Mat A(q, q);
      for (int i = 0; i < q; ++i)
        for (int j = 0; j <= i; ++j) A(i, j) = A(j, i) = rng.uniform(-1, 1) / q;
      Vec b(q);
      for (int i = 0; i < q; ++i) b[i] = rng.uniform(-1, 1);
      fields.push_back(ScalarField::quadratic(A, b, rng.uniform(-1, 1)));
    } else if (kind == 1) {
      Vec k0(q);
      for (int i = 0; i < q; ++i) k0[i] = rng.uniform(-1.5, 1.5);
      const double b0 = rng.uniform(-1, 1), c0 = rng.uniform(-2, 2);
      fields.push_back(ScalarField(
          q, [k0, b0, c0](const Vec& x) { return c0 * std::tanh(k0.dot(x) + b0); },
          [k0, b0, c0](const Vec& x) {
            const double t = std::tanh(k0.dot(x) + b0);
            return Vec(c0 * (1 - t * t) * k0);
          },
          [k0, b0, c0](const Vec& x) {
            const double t = std::tanh(k0.dot(x) + b0);
            return Mat(-2 * c0 * t * (1 - t * t) * (k0 * k0.transpose()));
          },
          Smoothness::Cinf));
    } else {
      Vec c(q);
      for (int i = 0; i < q; ++i) c[i] = rng.uniform(-1, 1);
      const double a0 = rng.uniform(-2, 2);
      const double s2 = rng.uniform(0.5, 2.0);
      fields.push_back(ScalarField(
          q,
          [a0, c, s2](const Vec& x) {
            return a0 * std::exp(-0.5 * (x - c).squaredNorm() / s2);
          },
          [a0, c, s2](const Vec& x) {
            const double e = a0 * std::exp(-0.5 * (x - c).squaredNorm() / s2);
            return Vec(-e / s2 * (x - c));
          },
          [a0, c, s2, q](const Vec& x) {
            const double e = a0 * std::exp(-0.5 * (x - c).squaredNorm() / s2);
            const Vec u = x - c;
            return Mat(e * (u * u.transpose() / (s2 * s2) - Mat::Identity(q, q) / s2));
          },
          Smoothness::Cinf));
    }
  }
  return fields;
}

// 1-D piecewise-linear interpolation with clamped extension; bounded field.
inline ScalarField interp1d(const std::vector<Vec>& states, const Vec& values) {
  require(!states.empty() && states.front().size() == 1, "interp1d: needs 1-D states");
  std::vector<double> xs;
  for (const auto& s : states) xs.push_back(s[0]);
  std::vector<double> fv(values.data(), values.data() + values.size());
  std::vector<size_t> order(xs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> sx, sf;
  for (size_t i : order) {
    sx.push_back(xs[i]);
    sf.push_back(fv[i]);
  }
  ScalarField f(1,
                [sx, sf](const Vec& x) {
                  const double t = x[0];
                  if (t <= sx.front()) return sf.front();
                  if (t >= sx.back()) return sf.back();
                  const auto it = std::upper_bound(sx.begin(), sx.end(), t);
                  const size_t hi = static_cast<size_t>(it - sx.begin());
                  const size_t lo = hi - 1;
                  const double w = (t - sx[lo]) / (sx[hi] - sx[lo]);
                  return (1 - w) * sf[lo] + w * sf[hi];
                },
                Smoothness::C0);
  f.bound_below = *std::min_element(sf.begin(), sf.end());
  f.bound_above = *std::max_element(sf.begin(), sf.end());
  return f;
}

struct ProblemDocument {
  json raw;
  int dimension = 1;
  std::uint64_t seed = 1;
  OperatorPtr op;         // may be null (pure resolvent documents)
  CouplingPtr coupling;   // may be null
  PenaltyFamily family;
  Containment containment;

  static ProblemDocument load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open document: " + path);
    json j;
    try {
      j = json::parse(in);
    } catch (const std::exception& e) {
      throw SchemaError(std::string("JSON parse error: ") + e.what());
    }
    return from_json(j);
  }

  static ProblemDocument from_json(const json& j) {
    ProblemDocument d;
    d.raw = j;
    expect(j.is_object(), "$", "document must be a JSON object");
    d.dimension = j.value("dimension", 1);
    expect(d.dimension >= 1, "$.dimension", "dimension must be >= 1");
    d.seed = j.value("seed", 1);
    d.family = parse_penalty(j.value("penalty", json::object()));
    d.containment = Containment::standard(d.dimension);
    if (j.contains("operator")) d.op = parse_operator(j.at("operator"), d.dimension, "$.operator");
    if (j.contains("coupling")) {
      expect(static_cast<bool>(d.op), "$.coupling", "coupling requires an operator");
      d.coupling = build_coupling(j.at("coupling"), d.op, d.dimension, "$.coupling");
    }
    return d;
  }
};

}  // namespace hjcp::doc
