#include "hjcp/doubling.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace hjcp;

namespace {

OperatorPtr half_walk() {
  DiscreteMeasure m(1);
  m.add(vec1(1.0), 0.5);
  m.add(vec1(-1.0), 0.5);
  JumpOp op;
  op.mu = [m](const Vec&) { return m; };
  return OperatorSpec::jump(op);
}

DoublingProblem base_problem(ScalarField u, ScalarField v, double eps, double phi) {
  DoublingProblem prob;
  prob.u = std::move(u);
  prob.v = std::move(v);
  prob.containment = Containment::standard(1);
  prob.family = PenaltyFamily::collection1();
  prob.eps = eps;
  prob.phi = phi;
  prob.H = half_walk();
  prob.lambda = 1.0;
  prob.h1 = ScalarField::constant(1, 0.0);
  prob.h2 = ScalarField::constant(1, 0.0);
  prob.K = SampleCloud::grid1d(-1, 1, 11);
  prob.domain = SampleCloud::grid1d(-4, 4, 161);
  return prob;
}

}  // namespace

TEST_CASE("lambda assembly for trivial data") {
  SECTION("zero data concentrates on the diagonal") {
    DoublingProblem prob =
        base_problem(ScalarField::constant(1, 0.0), ScalarField::constant(1, 0.0), 0.5, 1.0);
    prob.finalize_norms();
    const double alpha = 4.0;
    const ConvolutionField Pu = sup_convolve(prob.u, alpha, prob.domain);
    const ConvolutionField Pv = inf_convolve(prob.v, alpha, prob.domain);
    const ScalarField lam = assemble_lambda(prob, Pu, Pv, alpha);
    // Lambda = -(alpha/2) d^2(y, y') when phi = 1 and u = v = 0.
    CHECK(lam.value(vec2(0.5, 0.5)) == Catch::Approx(0.0).margin(1e-12));
    CHECK(lam.value(vec2(1.0, 0.0)) == Catch::Approx(-0.5 * alpha).margin(1e-12));
  }

  SECTION("constants pass through the convolutions") {
    DoublingProblem prob =
        base_problem(ScalarField::constant(1, 1.0), ScalarField::constant(1, 0.0), 0.5, 1.0);
    prob.finalize_norms();
    const double alpha = 4.0;
    const ConvolutionField Pu = sup_convolve(prob.u, alpha, prob.domain);
    const ConvolutionField Pv = inf_convolve(prob.v, alpha, prob.domain);
    const ScalarField lam = assemble_lambda(prob, Pu, Pv, alpha);
    CHECK(lam.value(vec2(0.0, 0.0)) == Catch::Approx(2.0).margin(1e-12));  // 1/(1-eps) * 1
  }

  SECTION("evaluating at the containment argmin yields the lower bound") {
    const ScalarField u(1, [](const Vec& x) { return std::tanh(x[0]); }, Smoothness::C0);
    const ScalarField v(1, [](const Vec& x) { return 0.3 * std::tanh(2 * x[0]); },
                        Smoothness::C0);
    DoublingProblem prob = base_problem(u, v, 0.2, 0.5);
    prob.finalize_norms();
    const double alpha = 8.0;
    const ConvolutionField Pu = sup_convolve(prob.u, alpha, prob.domain);
    const ConvolutionField Pv = inf_convolve(prob.v, alpha, prob.domain);
    const ScalarField lam = assemble_lambda(prob, Pu, Pv, alpha);
    double inf_u = kPlusInfinity, sup_v = -kPlusInfinity;
    for (const Vec& x : prob.domain.points()) {
      inf_u = std::min(inf_u, u.value(x));
      sup_v = std::max(sup_v, v.value(x));
    }
    const double lower = inf_u / (1 - prob.eps) - sup_v / (1 + prob.eps);
    CHECK(lam.value(vec2(0.0, 0.0)) >= lower - 1e-12);
  }
}

TEST_CASE("jensen perturbation") {
  const PenaltyFamily fam = PenaltyFamily::collection1();

  SECTION("smooth concave quadratic accepts p = 0") {
    ScalarField phi(2,
                    [](const Vec& w) { return -w[0] * w[0] - 2 * w[1] * w[1]; },
                    Smoothness::Cinf);
    const JensenResult jr =
        jensen_perturb(phi, vec1(0.0), vec1(0.0), fam, 0.5, 0.05, 0.04, 4.0);
    CHECK(jr.candidate == 0);
    CHECK(jr.p1.norm() == 0.0);
    CHECK((jr.x1 - vec1(0.0)).norm() <= 1e-9);
    CHECK(jr.value == Catch::Approx(jr.sup_phi).margin(1e-12));
  }

  SECTION("kink away from the optimizer is harmless") {
    // max(-(x-1)^2, -(x+1)^2) has its kink at 0; the optimum sits at (1, 1).
    ScalarField phi(2,
                    [](const Vec& w) {
                      const double mx = std::max(-(w[0] - 1) * (w[0] - 1),
                                                 -(w[0] + 1) * (w[0] + 1));
                      return mx - (w[0] - w[1]) * (w[0] - w[1]);
                    },
                    Smoothness::C0);
    const JensenResult jr =
        jensen_perturb(phi, vec1(1.0), vec1(1.0), fam, 0.4, 0.05, 0.04, 4.0);
    CHECK(jr.candidate == 0);
    CHECK((jr.x1 - vec1(1.0)).norm() <= 1e-9);
  }

  SECTION("sandwich bounds hold on accepted outputs") {
    DeterministicRng rng(55);
    for (int trial = 0; trial < 5; ++trial) {
      // Random concave quadratic with known maximizer.
      const double cx = rng.uniform(-0.5, 0.5), cy = rng.uniform(-0.5, 0.5);
      const double ax = rng.uniform(0.5, 2.0), ay = rng.uniform(0.5, 2.0);
      ScalarField phi(2,
                      [=](const Vec& w) {
                        return -ax * (w[0] - cx) * (w[0] - cx) -
                               ay * (w[1] - cy) * (w[1] - cy);
                      },
                      Smoothness::Cinf);
      const double eta = 0.2, e1 = 0.06, e2 = 0.03;
      const JensenResult jr =
          jensen_perturb(phi, vec1(cx), vec1(cy), fam, eta, e1, e2, 2 * std::max(ax, ay));
      CHECK(jr.value >= jr.sup_phi - 1e-9);
      CHECK(jr.value <= jr.sup_phi + (e1 + e2) * eta + 1e-9);
      CHECK(jr.p1.norm() < eta);
      CHECK(jr.p2.norm() < eta);
      CHECK((jr.x1 - vec1(cx)).norm() < eta);
      CHECK((jr.y1 - vec1(cy)).norm() < eta);
    }
  }

  SECTION("violated premise is rejected") {
    ScalarField phi(2, [](const Vec& w) { return -w.squaredNorm(); }, Smoothness::Cinf);
    CHECK_THROWS(jensen_perturb(phi, vec1(0), vec1(0), fam, 0.5, 0.6, 0.6, 2.0));
  }
}

TEST_CASE("symmetric zero problem keeps everything on the diagonal") {
  DoublingProblem prob =
      base_problem(ScalarField::constant(1, 0.0), ScalarField::constant(1, 0.0), 0.1, 0.01);
  const DoublingTrace trace = run_trace(prob, {2, 4, 8}, false);
  REQUIRE(trace.rows.size() == 3);
  for (const TraceRow& row : trace.rows) {
    CHECK(row.alpha_d2_y0 == 0.0);
    CHECK(distance(row.y0, row.y0p) == 0.0);
    CHECK(row.alpha_sum_dist_sq <= 1e-12);
  }
}

TEST_CASE("optimizers converge to the unique maximizer of u - v") {
  const double xstar = 0.5;
  const ScalarField u(1,
                      [xstar](const Vec& x) {
                        return 1.2 * std::exp(-4.0 * (x[0] - xstar) * (x[0] - xstar));
                      },
                      Smoothness::C0);
  const ScalarField v = ScalarField::constant(1, 0.0);
  DoublingProblem prob = base_problem(u, v, 0.01, 1.0);
  prob.domain = SampleCloud::grid1d(-4, 4, 321);
  const DoublingTrace trace = run_trace(prob, {4, 16, 64, 256}, false);
  const TraceRow& last = trace.rows.back();
  // Direct-maximization oracle for u - v.
  double best = -kPlusInfinity, arg = 0;
  for (const Vec& x : prob.domain.points()) {
    const double val = u.value(x) - v.value(x);
    if (val > best) {
      best = val;
      arg = x[0];
    }
  }
  CHECK(arg == Catch::Approx(xstar).margin(1e-9));
  CHECK(last.x[0] == Catch::Approx(xstar).margin(0.05));
  CHECK(last.xp[0] == Catch::Approx(xstar).margin(0.05));
  // Prop 5.1(j): limit points live in the K-hat sublevel set.
  const double level = (prob.norm_u + prob.norm_v) / prob.eps;
  CHECK(prob.containment.V.value(last.x) <= level);
  // Distance diagnostics decay along the schedule.
  CHECK(trace.rows.back().alpha_sum_dist_sq <= trace.rows.front().alpha_sum_dist_sq + 1e-9);
}

TEST_CASE("test function construction on constant data") {
  DoublingProblem prob =
      base_problem(ScalarField::constant(1, 0.0), ScalarField::constant(1, 0.0), 0.1, 0.01);
  prob.finalize_norms();
  const double alpha = 8.0;
  const ConvolutionField Pu = sup_convolve(prob.u, alpha, prob.domain);
  const ConvolutionField Pv = inf_convolve(prob.v, alpha, prob.domain);

  TraceRow row;
  row.alpha = alpha;
  row.y0 = vec1(0.0);
  row.y0p = vec1(0.0);
  row.p1 = vec1(0.0);
  row.p2 = vec1(0.0);
  row.y = vec1(0.0);
  row.yp = vec1(0.0);
  row.x = Pu.argopt(row.y);
  row.xp = Pv.argopt(row.yp);

  const TestFunctionPair pair = build_test_functions(prob, Pu, Pv, row);
  // P^alpha[0] == 0 and the squeeze is tight at y_alpha.
  CHECK(pair.fhat_dagger.value(row.y) == Catch::Approx(0.0).margin(1e-12));
  CHECK(pair.squeeze_defect <= 1e-9);
  // u - f_dagger has its unique maximum at x_alpha (cloud scan).
  const double at_max = -pair.f_dagger.value(row.x);
  for (const Vec& x : prob.domain.points()) {
    if (distance(x, row.x) < 1e-12) continue;
    CHECK(-pair.f_dagger.value(x) <= at_max + 1e-12);
  }
  // v - f_ddagger has its minimum at x'_alpha.
  const double at_min = -pair.f_ddagger.value(row.xp);
  for (const Vec& x : prob.domain.points()) {
    CHECK(-pair.f_ddagger.value(x) >= at_min - 1e-12);
  }
}

TEST_CASE("hamiltonian gap diagnostics") {
  SECTION("zero operator gives zero gap") {
    DoublingProblem prob =
        base_problem(ScalarField::constant(1, 0.0), ScalarField::constant(1, 0.0), 0.1, 0.01);
    prob.H = OperatorSpec::sum({});
    prob.finalize_norms();
    const double alpha = 8.0;
    const ConvolutionField Pu = sup_convolve(prob.u, alpha, prob.domain);
    const ConvolutionField Pv = inf_convolve(prob.v, alpha, prob.domain);
    TraceRow row;
    row.alpha = alpha;
    row.y0 = row.y0p = row.p1 = row.p2 = row.y = row.yp = vec1(0.0);
    row.x = Pu.argopt(row.y);
    row.xp = Pv.argopt(row.yp);
    const TestFunctionPair pair = build_test_functions(prob, Pu, Pv, row);
    CHECK(hamiltonian_gap(prob, row, pair) == 0.0);
  }

  SECTION("symmetric jump problem meets the bound") {
    DoublingProblem prob =
        base_problem(ScalarField::constant(1, 0.0), ScalarField::constant(1, 0.0), 0.1, 0.01);
    const DoublingTrace trace = run_trace(prob, {2, 8, 32}, true);
    const TraceRow& last = trace.rows.back();
    CHECK(last.hamiltonian_gap >= -1e-6);
    CHECK(last.hamiltonian_gap <= last.gap_bound);
    CHECK(trace.C0_eps > 0);
    CHECK(trace.C_eps_phi > 0);
  }
}

TEST_CASE("strict bound constants") {
  DoublingProblem prob =
      base_problem(ScalarField::constant(1, 1.0), ScalarField::constant(1, 1.0), 0.5, 0.01);
  prob.K = SampleCloud::explicit_points({vec1(0.0)});
  prob.finalize_norms();

  SECTION("closed-form K-hat radius") {
    const StrictBound b = strict_bound(prob, 0.0);
    CHECK(b.khat_level == Catch::Approx(4.0));
    CHECK(b.khat_radius == Catch::Approx(std::sqrt(2.0 * (std::exp(4.0) - 1.0))).margin(1e-9));
    CHECK(b.khat_radius == Catch::Approx(10.354).margin(1e-3));
  }

  SECTION("monotone in eps") {
    // Nonzero data norms drive the 1/(1-eps) blowup.
    prob.h1 = ScalarField::constant(1, 1.0);
    prob.h2 = ScalarField::constant(1, 1.0);
    double prev_level = kPlusInfinity, prev_C = -kPlusInfinity;
    for (double eps : {0.3, 0.5, 0.7, 0.9, 0.97}) {
      prob.eps = eps;
      const StrictBound b = strict_bound(prob, 1.0);
      CHECK(b.khat_level < prev_level);
      CHECK(b.C_eps > prev_C);
      prev_level = b.khat_level;
      prev_C = b.C_eps;
    }
  }

  SECTION("zero data reduces to the K sublevel") {
    DoublingProblem zp =
        base_problem(ScalarField::constant(1, 0.0), ScalarField::constant(1, 0.0), 0.5, 0.01);
    zp.K = SampleCloud::grid1d(-1, 1, 5);
    zp.finalize_norms();
    const StrictBound b = strict_bound(zp, 0.0);
    double supV = -kPlusInfinity;
    for (const Vec& x : zp.K.points()) supV = std::max(supV, zp.containment.V.value(x));
    CHECK(b.khat_level == Catch::Approx(supV));
    // K-hat contains K.
    for (const Vec& x : zp.K.points()) CHECK(zp.containment.V.value(x) <= b.khat_level + 1e-12);
  }
}

TEST_CASE("trace invariants hold on an asymmetric problem") {
  const ScalarField u(1, [](const Vec& x) { return 0.5 * std::tanh(x[0]); }, Smoothness::C0);
  const ScalarField v(1, [](const Vec& x) { return 0.5 * std::tanh(x[0]) + 0.1; },
                      Smoothness::C0);
  DoublingProblem prob = base_problem(u, v, 0.1, 0.05);
  const DoublingTrace trace = run_trace(prob, {2, 4, 8, 16, 32}, false);
  REQUIRE(trace.rows.size() == 5);
  double prev = kPlusInfinity;
  const double mesh = prob.domain.mesh_estimate();
  for (const TraceRow& row : trace.rows) {
    CHECK(row.sup_lambda <= prev + 1e-9 + mesh * mesh);
    prev = row.sup_lambda;
    CHECK(row.xi_sandwich_mid >= -(1e-9 + mesh * mesh));
    CHECK(row.xi_sandwich_mid <= row.xi_sandwich_hi + 1e-9 + mesh * mesh);
    CHECK(distance(row.y, row.y0) <= 1.0 / row.alpha + mesh + 1e-12);
  }
}

TEST_CASE("boundary optimizers trigger the growth ladder") {
  // u peaks at 3, outside the initial [-2, 2] domain; phi = 1 removes the
  // containment pull, so the first pass pins the optimizer to the hull.
  const ScalarField u(1,
                      [](const Vec& x) {
                        return std::exp(-2.0 * (x[0] - 3.0) * (x[0] - 3.0));
                      },
                      Smoothness::C0);
  DoublingProblem prob = base_problem(u, ScalarField::constant(1, 0.0), 0.05, 1.0);
  prob.domain = SampleCloud::grid1d(-2, 2, 81);
  prob.grow_domain = [](int k) {
    const double r = 2.0 * std::pow(2.0, k);
    return SampleCloud::grid1d(-r, r, static_cast<int>(std::llround(r / 0.05)) * 2 + 1);
  };
  const DoublingTrace trace = run_trace(prob, {8.0}, false);
  CHECK(trace.rows.back().y0[0] == Catch::Approx(3.0).margin(0.2));

  DoublingProblem stuck = base_problem(u, ScalarField::constant(1, 0.0), 0.05, 1.0);
  stuck.domain = SampleCloud::grid1d(-2, 2, 81);
  CHECK_THROWS(run_trace(stuck, {8.0}, false));
}

TEST_CASE("two-dimensional symmetric trace stays diagonal") {
  DiscreteMeasure m(2);
  m.add(vec2(1.0, 0.0), 0.5);
  m.add(vec2(-1.0, 0.0), 0.5);
  m.add(vec2(0.0, 1.0), 0.5);
  m.add(vec2(0.0, -1.0), 0.5);
  JumpOp walk;
  walk.mu = [m](const Vec&) { return m; };

  DoublingProblem prob;
  prob.u = ScalarField::constant(2, 0.0);
  prob.v = ScalarField::constant(2, 0.0);
  prob.containment = Containment::standard(2);
  prob.family = PenaltyFamily::collection1();
  prob.eps = 0.1;
  prob.phi = 0.01;
  prob.H = OperatorSpec::jump(walk);
  prob.lambda = 1.0;
  prob.h1 = ScalarField::constant(2, 0.0);
  prob.h2 = ScalarField::constant(2, 0.0);
  prob.K = SampleCloud::grid(vec2(-1, -1), vec2(1, 1), {5, 5});
  prob.domain = SampleCloud::grid(vec2(-2, -2), vec2(2, 2), {21, 21});
  const DoublingTrace trace = run_trace(prob, {2, 4}, true);
  for (const TraceRow& row : trace.rows) {
    CHECK(distance(row.y0, row.y0p) == 0.0);
    CHECK(row.alpha_sum_dist_sq <= 1e-12);
    CHECK(row.hamiltonian_gap <= row.gap_bound);
  }
}
