// Batch pipelines behind the CLI: run hypothesis checks, resolvent solves
// with contraction/strict verification, and doubling traces from problem
// documents. Exit contract: 0 pass, 1 check/diagnostic failure, 2 input
// error.
#pragma once

#include "hjcp/document.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>

namespace hjcp::run {

using doc::json;
using doc::ProblemDocument;
using doc::SchemaError;

struct Options {
  bool has_seed = false;
  std::uint64_t seed = 0;
  std::vector<double> schedule;  // overrides the document when nonempty
  std::string out_dir = ".";
  double tolerance_scale = 1.0;
};

struct Outcome {
  int exit_code = 0;
  json report;
};

namespace detail {

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string environment_fingerprint() {
#if defined(__clang__)
  return std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  return std::string("gcc ") + __VERSION__;
#else
  return "unknown-compiler";
#endif
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open document: " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string& dir, const std::string& name,
                       const std::string& content) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/" + name, std::ios::binary);
  out << content;
}

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline json report_json(const CheckReport& rep) {
  json j;
  j["name"] = rep.name;
  j["passed"] = rep.passed;
  j["worst"] = rep.worst;
  j["witness"] = rep.witness;
  json stats = json::object();
  for (const auto& [k, v] : rep.stats) stats[k] = v;
  j["stats"] = stats;
  j["notes"] = rep.notes;
  return j;
}

inline const DriftConvexOp* find_drift(const OperatorSpec& node) {
  if (const auto* d = std::get_if<DriftConvexOp>(&node.node)) return d;
  if (const auto* sum = std::get_if<std::vector<OperatorPtr>>(&node.node)) {
    for (const auto& t : *sum)
      if (const auto* d = find_drift(*t)) return d;
  }
  return nullptr;
}

inline const JumpOp* find_jump(const OperatorSpec& node) {
  if (const auto* j = std::get_if<JumpOp>(&node.node)) return j;
  if (const auto* sum = std::get_if<std::vector<OperatorPtr>>(&node.node)) {
    for (const auto& t : *sum)
      if (const auto* j = find_jump(*t)) return j;
  }
  return nullptr;
}

inline const CouplingSpec::JumpCoupling* find_jump_coupling(const CouplingSpec& node) {
  if (const auto* j = std::get_if<CouplingSpec::JumpCoupling>(&node.node)) return j;
  if (const auto* sum = std::get_if<std::vector<CouplingPtr>>(&node.node)) {
    for (const auto& t : *sum)
      if (const auto* j = find_jump_coupling(*t)) return j;
  }
  return nullptr;
}

// Resolvent problem assembly shared by solve and trace.
struct ResolventSetup {
  FiniteProblem problem;
  std::vector<int> interior;
};

inline ResolventSetup build_resolvent(const ProblemDocument& d, const json& rj) {
  ResolventSetup setup;
  doc::expect(rj.contains("lambda"), "$.resolvent.lambda", "lambda required");
  const double lambda = rj.at("lambda").get<double>();
  doc::expect(lambda > 0, "$.resolvent.lambda", "lambda must be positive");

  if (rj.contains("discretize")) {
    doc::expect(static_cast<bool>(d.op), "$.resolvent.discretize",
                "discretize requires an operator");
    const json& dj = rj.at("discretize");
    DiscretizeOptions opt;
    opt.radius = dj.at("radius").get<double>();
    opt.mesh = dj.at("mesh").get<double>();
    opt.controls = dj.value("controls", 0);
    opt.control_radius = dj.value("control_radius", 1.0);
    DiscretizedProblem disc = discretize(d.op, d.dimension, lambda,
                                         Vec::Zero(1), opt);  // h filled below
    setup.problem = std::move(disc.problem);
    setup.interior = std::move(disc.interior);
  } else {
    doc::expect(rj.contains("states") && rj.contains("generator"), "$.resolvent",
                "need either discretize or explicit states+generator");
    for (const auto& s : rj.at("states"))
      setup.problem.states.push_back(doc::parse_vec(s, "$.resolvent.states"));
    const int n = static_cast<int>(setup.problem.states.size());
    Mat L(n, n);
    const json& gj = rj.at("generator");
    doc::expect(static_cast<int>(gj.size()) == n, "$.resolvent.generator", "row count mismatch");
    for (int i = 0; i < n; ++i) {
      doc::expect(static_cast<int>(gj[i].size()) == n, "$.resolvent.generator",
                  "column count mismatch");
      for (int j = 0; j < n; ++j) L(i, j) = gj[i][j].get<double>();
    }
    setup.problem.generator = {{L}};
    for (int i = 0; i < n; ++i) setup.interior.push_back(i);
    setup.problem.lambda = lambda;
  }

  const int n = setup.problem.n_states();
  auto parse_h = [&](const json& hj, const std::string& path) {
    if (hj.is_array()) {
      doc::expect(static_cast<int>(hj.size()) == n, path,
                  "h table length mismatch (" + std::to_string(hj.size()) + " vs " +
                      std::to_string(n) + " states)");
      return doc::parse_vec(hj, path);
    }
    doc::expect(hj.is_object() && hj.contains("expr"), path, "h needs an array or an expr");
    const expr::Fn fn = expr::parse(hj.at("expr").get<std::string>(), d.dimension);
    Vec h(n);
    for (int s = 0; s < n; ++s) h[s] = fn(setup.problem.states[s]);
    return h;
  };
  doc::expect(rj.contains("h"), "$.resolvent.h", "h required");
  setup.problem.h = parse_h(rj.at("h"), "$.resolvent.h");
  setup.problem.validate();
  return setup;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

inline Outcome cmd_check(const std::string& path, const Options& opt = {}) {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  std::string bytes;
  ProblemDocument d;
  try {
    bytes = detail::read_file(path);
    d = ProblemDocument::from_json(json::parse(bytes));
  } catch (const std::exception& e) {
    out.exit_code = 2;
    out.report = {{"command", "check"}, {"error", e.what()}};
    detail::write_file(opt.out_dir, "report.json", out.report.dump(2) + "\n");
    return out;
  }

  out.report["command"] = "check";
  out.report["input"] = path;
  out.report["input_hash"] = detail::fnv1a_hex(bytes);
  out.report["environment"] = detail::environment_fingerprint();
  const std::uint64_t seed = opt.has_seed ? opt.seed : d.seed;
  out.report["seed"] = seed;

  json checks = json::array();
  int failed = 0;
  try {
    const int q = d.dimension;
    for (const auto& cj : d.raw.value("checks", json::array())) {
      const std::string name = cj.at("name").get<std::string>();
      const double tol_scale = opt.tolerance_scale;
      CheckReport rep;
      if (name == "coupling_identity") {
        doc::expect(static_cast<bool>(d.coupling), "$.checks", name + " requires a coupling");
        const SampleCloud cloud =
            doc::parse_cloud(cj.at("cloud"), "$.checks.cloud", seed);
        const int pairs = cj.value("pairs", 50);
        const double tol = cj.value("tolerance", 1e-8) * tol_scale;
        const auto battery = doc::field_battery(q, 2 * pairs, seed + 11);
        rep.name = name;
        for (int p = 0; p < pairs; ++p) {
          CheckReport one =
              check_coupling_identity(*d.coupling, battery[2 * p], battery[2 * p + 1], cloud, tol);
          rep.stats["max_relative_gap"] =
              std::max(rep.stats["max_relative_gap"], one.stats["max_relative_gap"]);
          if (!one.passed) rep.fail(one.worst, "pair " + std::to_string(p) + ": " + one.witness);
        }
        rep.stats["pairs"] = pairs;
        if (d.raw.at("coupling").value("kind", "synchronous") == "synchronous")
          rep.notes.push_back(
              "surplus mass is coupled to an idle jump (one admissible extended coupling)");
      } else if (name == "controlled_growth") {
        doc::expect(static_cast<bool>(d.coupling), "$.checks", name + " requires a coupling");
        const SampleCloud cloud = doc::parse_cloud(cj.at("cloud"), "$.checks.cloud", seed);
        std::vector<double> alphas;
        for (const auto& a : cj.value("alphas", json::array({2.0, 8.0, 32.0})))
          alphas.push_back(a.get<double>());
        rep = check_controlled_growth(*d.coupling, cloud, alphas,
                                      cj.value("tolerance", 1e-6) * tol_scale);
      } else if (name == "semi_monotone") {
        doc::expect(static_cast<bool>(d.op), "$.checks", name + " requires an operator");
        const DriftConvexOp* drift = detail::find_drift(*d.op);
        doc::expect(drift != nullptr, "$.checks", name + " requires a drift leaf");
        const SampleCloud cloud = doc::parse_cloud(cj.at("cloud"), "$.checks.cloud", seed);
        std::vector<double> alphas;
        for (const auto& a : cj.value("alphas", json::array({2.0, 10.0, 100.0})))
          alphas.push_back(a.get<double>());
        rep = check_semi_monotone(*drift, cloud, alphas, cj.value("tolerance", 1e-6) * tol_scale);
      } else if (name == "pi_lipschitz") {
        doc::expect(static_cast<bool>(d.coupling), "$.checks", name + " requires a coupling");
        const auto* jc = detail::find_jump_coupling(*d.coupling);
        doc::expect(jc != nullptr, "$.checks", name + " requires a jump coupling");
        const SampleCloud cloud = doc::parse_cloud(cj.at("cloud"), "$.checks.cloud", seed);
        check_pi_lipschitz(jc->pi, cloud, &rep);
      } else if (name == "lyapunov") {
        doc::expect(static_cast<bool>(d.op), "$.checks", name + " requires an operator");
        SampleCloud K = cj.contains("cloud")
                            ? doc::parse_cloud(cj.at("cloud"), "$.checks.cloud", seed)
                            : SampleCloud::uniform_ball(Vec::Zero(q), 1.0, 64, seed + 5);
        const LyapunovEstimate est = lyapunov_bound(*d.op, d.containment.V, K);
        rep = est.report;
        if (!is_finite(est.c_V)) rep.fail(kPlusInfinity, "c_V not finite");
      } else if (name == "penalty_family") {
        const SampleCloud cloud = doc::parse_cloud(cj.at("cloud"), "$.checks.cloud", seed);
        rep = certify_family(d.family, cloud, seed + 7);
      } else if (name == "measure_family") {
        doc::expect(static_cast<bool>(d.op), "$.checks", name + " requires an operator");
        const JumpOp* jump = detail::find_jump(*d.op);
        doc::expect(jump != nullptr, "$.checks", name + " requires a jump leaf");
        const SampleCloud cloud = doc::parse_cloud(cj.at("cloud"), "$.checks.cloud", seed);
        rep = check_measure_family(jump->mu, cloud, jump->cut,
                                   cj.value("uniform_bound", 1e6),
                                   cj.value("tolerance", 1e-6) * tol_scale);
      } else if (name == "coupling_max_principle") {
        doc::expect(static_cast<bool>(d.coupling), "$.checks", name + " requires a coupling");
        const SampleCloud cloud = doc::parse_cloud(cj.at("cloud"), "$.checks.cloud", seed);
        const SampleCloud bumps = SampleCloud::uniform_ball(Vec::Zero(2), 1.0, 8, seed + 13);
        rep = check_coupling_max_principle(*d.coupling, cloud, bumps,
                                           cj.value("tolerance", 1e-8) * tol_scale);
      } else if (name == "isaacs") {
        doc::expect(cj.contains("payoff"), "$.checks", "isaacs check needs a payoff matrix");
        const json& pj = cj.at("payoff");
        OperatorSpec::Isaacs node;
        const size_t n1 = pj.size(), n2 = pj.at(0).size();
        Mat payoff(n1, n2);
        for (size_t i = 0; i < n1; ++i)
          for (size_t j2 = 0; j2 < n2; ++j2) payoff(i, j2) = pj[i][j2].get<double>();
        for (size_t i = 0; i < n1; ++i) node.theta1.push_back(vec1(static_cast<double>(i)));
        for (size_t j2 = 0; j2 < n2; ++j2) node.theta2.push_back(vec1(static_cast<double>(j2)));
        node.component.assign(n1, std::vector<OperatorPtr>(n2, OperatorSpec::sum({})));
        node.cost.cost = [payoff](const Vec&, int i1, int i2) { return -payoff(i1, i2); };
        const OperatorPtr game = OperatorSpec::isaacs(std::move(node));
        const SampleCloud cloud = SampleCloud::explicit_points({Vec::Zero(q)});
        rep = check_isaacs(*game, ScalarField::constant(q, 0.0), cloud);
      } else {
        throw SchemaError("$.checks: unknown check name '" + name + "'");
      }
      if (!rep.passed) ++failed;
      checks.push_back(detail::report_json(rep));
    }
  } catch (const std::exception& e) {
    out.exit_code = 2;
    out.report["error"] = e.what();
    detail::write_file(opt.out_dir, "report.json", out.report.dump(2) + "\n");
    return out;
  }

  out.report["checks"] = checks;
  out.report["notes"] = {
      "domain sequential-denseness is a function-space hypothesis with no finite-dimensional "
      "check and is not certified"};
  out.report["summary"] = {{"total", checks.size()},
                           {"failed", failed},
                           {"passed", checks.size() - failed}};
  out.report["runtime_ms"] =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  out.exit_code = failed == 0 ? 0 : 1;
  detail::write_file(opt.out_dir, d.raw.value("output", json::object()).value("report", "report.json"),
                     out.report.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

inline Outcome cmd_solve(const std::string& path, const Options& opt = {}) {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  std::string bytes;
  ProblemDocument d;
  detail::ResolventSetup setup;
  json rj;
  try {
    bytes = detail::read_file(path);
    d = ProblemDocument::from_json(json::parse(bytes));
    doc::expect(d.raw.contains("resolvent"), "$.resolvent", "resolvent section required");
    rj = d.raw.at("resolvent");
    setup = detail::build_resolvent(d, rj);
  } catch (const std::exception& e) {
    out.exit_code = 2;
    out.report = {{"command", "solve"}, {"error", e.what()}};
    detail::write_file(opt.out_dir, "report.json", out.report.dump(2) + "\n");
    return out;
  }

  out.report["command"] = "solve";
  out.report["input"] = path;
  out.report["input_hash"] = detail::fnv1a_hex(bytes);
  out.report["environment"] = detail::environment_fingerprint();
  const std::uint64_t seed = opt.has_seed ? opt.seed : d.seed;

  int failed = 0;
  try {
    const ResolventSolution sol = solve(setup.problem);
    out.report["residual"] = sol.residual;
    out.report["iterations"] = sol.iterations;

    std::string csv = "state";
    for (int i = 1; i < setup.problem.states.front().size(); ++i)
      csv += ",state_" + std::to_string(i + 1);
    csv += ",f\n";
    for (int s = 0; s < setup.problem.n_states(); ++s) {
      for (int i = 0; i < setup.problem.states[s].size(); ++i) {
        if (i) csv += ",";
        csv += detail::fmt(setup.problem.states[s][i]);
      }
      csv += "," + detail::fmt(sol.f[s]) + "\n";
    }
    detail::write_file(opt.out_dir,
                       d.raw.value("output", json::object()).value("solution_csv", "solution.csv"),
                       csv);

    if (rj.contains("contraction")) {
      const json& cj = rj.at("contraction");
      const int count = cj.value("pairs", 100);
      const double amp = cj.value("amplitude", 1.0);
      DeterministicRng rng(cj.value("seed", seed + 3));
      std::vector<std::pair<Vec, Vec>> pairs;
      const int n = setup.problem.n_states();
      for (int k = 0; k < count; ++k) {
        Vec h1(n), h2(n);
        for (int s = 0; s < n; ++s) {
          h1[s] = amp * rng.uniform(-1, 1);
          h2[s] = amp * rng.uniform(-1, 1);
        }
        pairs.emplace_back(h1, h2);
      }
      const CheckReport rep = verify_contraction(setup.problem, pairs);
      if (!rep.passed) ++failed;
      out.report["contraction"] = detail::report_json(rep);
    }

    if (rj.contains("strict")) {
      const json& sj = rj.at("strict");
      const int n = setup.problem.n_states();
      Vec V(n);
      if (sj.contains("V")) {
        const expr::Fn fn = expr::parse(sj.at("V").at("expr").get<std::string>(), d.dimension);
        for (int s = 0; s < n; ++s) V[s] = fn(setup.problem.states[s]);
      } else {
        for (int s = 0; s < n; ++s) V[s] = d.containment.V.value(setup.problem.states[s]);
      }
      const double kr = sj.value("K_radius", 1.0);
      std::vector<int> K;
      for (int s = 0; s < n; ++s)
        if (setup.problem.states[s].norm() <= kr) K.push_back(s);
      json strict = json::array();
      for (const auto& ej : sj.value("eps", json::array({0.5}))) {
        const double eps = ej.get<double>();
        // Localized perturbation: h1 differs from h2 only beyond the a-priori
        // K-hat sublevel set computed from worst-case norms.
        const double amp = sj.value("amplitude", 1.0);
        const double apriori =
            2.0 * (setup.problem.h.cwiseAbs().maxCoeff() + amp) / eps + [&] {
              double m = -kPlusInfinity;
              for (int s : K) m = std::max(m, V[s]);
              return m;
            }();
        Vec bump = Vec::Zero(n);
        int outside = 0;
        for (int s = 0; s < n; ++s)
          if (V[s] > apriori) {
            bump[s] = amp;
            ++outside;
          }
        std::vector<std::pair<Vec, Vec>> pairs{{setup.problem.h + bump, setup.problem.h}};
        StrictEstimateResult res = verify_strict_estimate(setup.problem, V, K, eps, pairs);
        if (!res.report.passed) ++failed;
        json sr = detail::report_json(res.report);
        sr["eps"] = eps;
        sr["C_eps"] = res.C_eps;
        sr["c_V"] = res.c_V;
        sr["Khat_size"] = res.Khat.size();
        sr["states_beyond_apriori_Khat"] = outside;
        strict.push_back(sr);
      }
      out.report["strict"] = strict;
    }

    if (sol.residual > 1e-9) ++failed;
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.report["error"] = e.what();
    detail::write_file(opt.out_dir, "report.json", out.report.dump(2) + "\n");
    return out;
  }

  out.report["summary"] = {{"failed", failed}};
  out.report["runtime_ms"] =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  out.exit_code = failed == 0 ? 0 : 1;
  detail::write_file(opt.out_dir, d.raw.value("output", json::object()).value("report", "report.json"),
                     out.report.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// trace
// ---------------------------------------------------------------------------

inline Outcome cmd_trace(const std::string& path, const Options& opt = {}) {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  std::string bytes;
  ProblemDocument d;
  json dj;
  try {
    bytes = detail::read_file(path);
    d = ProblemDocument::from_json(json::parse(bytes));
    doc::expect(d.raw.contains("doubling"), "$.doubling", "doubling section required");
    doc::expect(static_cast<bool>(d.op), "$.operator", "trace requires an operator");
    dj = d.raw.at("doubling");
  } catch (const std::exception& e) {
    out.exit_code = 2;
    out.report = {{"command", "trace"}, {"error", e.what()}};
    detail::write_file(opt.out_dir, "summary.json", out.report.dump(2) + "\n");
    return out;
  }

  out.report["command"] = "trace";
  out.report["input"] = path;
  out.report["input_hash"] = detail::fnv1a_hex(bytes);
  out.report["environment"] = detail::environment_fingerprint();

  try {
    DoublingProblem prob;
    prob.eps = dj.value("eps", 0.1);
    prob.phi = dj.value("phi", 0.01);
    prob.lambda = d.raw.contains("resolvent") ? d.raw.at("resolvent").value("lambda", 1.0) : 1.0;
    prob.H = d.op;
    prob.Hhat = d.coupling;
    prob.containment = d.containment;
    prob.family = d.family;
    prob.K = doc::parse_cloud(dj.at("K"), "$.doubling.K", d.seed);
    prob.domain = doc::parse_cloud(dj.at("domain"), "$.doubling.domain", d.seed);
    if (dj.at("domain").value("kind", "") == "grid") {
      const json dom = dj.at("domain");
      prob.grow_domain = [dom](int k) {
        const double scale = std::pow(2.0, k);
        Vec lo = doc::parse_vec(dom.at("lo"), "lo") * scale;
        Vec hi = doc::parse_vec(dom.at("hi"), "hi") * scale;
        std::vector<int> counts;
        for (const auto& c : dom.at("counts"))
          counts.push_back((c.get<int>() - 1) * static_cast<int>(scale) + 1);
        return SampleCloud::grid(lo, hi, counts);
      };
    }

    auto parse_data_field = [&](const std::string& key) {
      doc::expect(dj.contains(key), "$.doubling." + key, "required");
      return doc::field_from_expr(dj.at(key).at("expr").get<std::string>(), d.dimension);
    };
    prob.h1 = parse_data_field("h1");
    prob.h2 = parse_data_field("h2");

    auto build_uv = [&](const std::string& key, const ScalarField& hfield) {
      const json uj = dj.at(key);
      if (uj.value("source", "") == "resolvent") {
        doc::expect(d.raw.contains("resolvent"), "$.doubling." + key,
                    "resolvent source requires a resolvent section");
        doc::expect(d.dimension == 1, "$.doubling." + key,
                    "resolvent-sourced data needs dimension 1");
        detail::ResolventSetup setup = detail::build_resolvent(d, d.raw.at("resolvent"));
        Vec h(setup.problem.n_states());
        for (int s = 0; s < setup.problem.n_states(); ++s)
          h[s] = hfield.value(setup.problem.states[s]);
        setup.problem.h = h;
        const ResolventSolution sol = solve(setup.problem);
        return doc::interp1d(setup.problem.states, sol.f);
      }
      return doc::field_from_expr(uj.at("expr").get<std::string>(), d.dimension);
    };
    prob.u = build_uv("u", prob.h1);
    prob.v = build_uv("v", prob.h2);

    std::vector<double> schedule = opt.schedule;
    if (schedule.empty())
      for (const auto& a : dj.value("schedule", json::array()))
        schedule.push_back(a.get<double>());
    if (schedule.empty())
      for (int k = 1; k <= 12; ++k) schedule.push_back(std::pow(2.0, k));

    const bool with_gap = dj.value("gap", true);
    const DoublingTrace trace = run_trace(prob, schedule, with_gap);

    // Frozen CSV: one row per alpha.
    const int q = d.dimension;
    std::string csv = "alpha";
    auto cols = [&](const std::string& base) {
      for (int i = 1; i <= q; ++i)
        csv += "," + base + (q == 1 ? std::string() : "_" + std::to_string(i));
    };
    cols("y0");
    cols("y0p");
    cols("p1");
    cols("p2");
    cols("y");
    cols("yp");
    cols("x");
    cols("xp");
    csv +=
        ",sup_lambda,sup_lambda_hat,alpha_d2_y0,alpha_sum_dist_sq,xi_sandwich_mid,xi_sandwich_hi,"
        "hamiltonian_gap,gap_bound,jensen_instability\n";
    for (const TraceRow& r : trace.rows) {
      csv += detail::fmt(r.alpha);
      for (const Vec* v : {&r.y0, &r.y0p, &r.p1, &r.p2, &r.y, &r.yp, &r.x, &r.xp})
        for (int i = 0; i < q; ++i) csv += "," + detail::fmt((*v)[i]);
      for (double x : {r.sup_lambda, r.sup_lambda_hat, r.alpha_d2_y0, r.alpha_sum_dist_sq,
                       r.xi_sandwich_mid, r.xi_sandwich_hi, r.hamiltonian_gap, r.gap_bound,
                       r.jensen_instability})
        csv += "," + detail::fmt(x);
      csv += "\n";
    }
    detail::write_file(opt.out_dir,
                       d.raw.value("output", json::object()).value("trace_csv", "trace.csv"), csv);

    const TraceRow& last = trace.rows.back();
    const StrictBound sb = strict_bound(prob, trace.c_V);
    json summary;
    summary["rows"] = trace.rows.size();
    summary["domain_mesh"] = prob.domain.mesh_estimate();
    summary["c_V"] = trace.c_V;
    summary["C0_eps"] = trace.C0_eps;
    summary["C_eps_phi"] = trace.C_eps_phi;
    summary["strict_bound"] = {{"khat_level", sb.khat_level},
                               {"khat_radius", sb.khat_radius},
                               {"C_eps", sb.C_eps}};
    summary["final_alpha"] = last.alpha;
    summary["final_alpha_d2_y0"] = last.alpha_d2_y0;
    summary["final_alpha_sum_dist_sq"] = last.alpha_sum_dist_sq;
    summary["final_gap"] = last.hamiltonian_gap;
    summary["gap_bound"] = last.gap_bound;
    summary["flags"] = trace.flags;
    if (trace.rows.size() < 2) {
      summary["flags"].push_back("no trend data");
    } else {
      // Limits are never asserted; report the final value with a trend flag.
      const TraceRow& first = trace.rows.front();
      summary["alpha_d2_trend_down"] = last.alpha_d2_y0 <= first.alpha_d2_y0 + 1e-12;
      summary["alpha_sum_dist_trend_down"] =
          last.alpha_sum_dist_sq <= first.alpha_sum_dist_sq + 1e-12;
    }

    bool ok = true;
    if (with_gap && last.hamiltonian_gap > last.gap_bound) {
      ok = false;
      summary["violated"] = "hamiltonian gap bound at final row";
    }
    summary["passed"] = ok;
    out.report["summary"] = summary;
    out.report["runtime_ms"] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.exit_code = ok ? 0 : 1;
    detail::write_file(opt.out_dir,
                       d.raw.value("output", json::object()).value("summary", "summary.json"),
                       out.report.dump(2) + "\n");
    return out;
  } catch (const SchemaError& e) {
    out.exit_code = 2;
    out.report["error"] = e.what();
    detail::write_file(opt.out_dir, "summary.json", out.report.dump(2) + "\n");
    return out;
  } catch (const std::exception& e) {
    // Trace invariant violations carry the first violated invariant's name.
    out.exit_code = 1;
    out.report["error"] = e.what();
    detail::write_file(opt.out_dir, "summary.json", out.report.dump(2) + "\n");
    return out;
  }
}

// ---------------------------------------------------------------------------
// report --merge
// ---------------------------------------------------------------------------

inline Outcome cmd_report_merge(const std::vector<std::string>& paths, const Options& opt = {}) {
  Outcome out;
  out.report["command"] = "report";
  json merged = json::array();
  int failed = 0;
  for (const auto& p : paths) {
    try {
      const json j = json::parse(detail::read_file(p));
      merged.push_back({{"input", p}, {"report", j}});
      if (j.contains("summary") && j["summary"].contains("failed") &&
          j["summary"]["failed"].get<int>() > 0)
        ++failed;
      if (j.contains("summary") && j["summary"].contains("passed") &&
          j["summary"]["passed"].is_boolean() && !j["summary"]["passed"].get<bool>())
        ++failed;
    } catch (const std::exception& e) {
      out.exit_code = 2;
      out.report["error"] = std::string("cannot merge ") + p + ": " + e.what();
      return out;
    }
  }
  out.report["merged"] = merged;
  out.report["failed_inputs"] = failed;
  out.exit_code = failed == 0 ? 0 : 1;
  detail::write_file(opt.out_dir, "merged.json", out.report.dump(2) + "\n");
  return out;
}

}  // namespace hjcp::run
