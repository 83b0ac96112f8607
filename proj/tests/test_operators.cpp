#include "hjcp/operators.hpp"

#include "hjcp/document.hpp"
#include "hjcp/penalty.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace hjcp;

namespace {

ScalarField containment_v() {
  return Containment::standard(1).V;
}

JumpOp unit_walk(double w = 1.0) {
  DiscreteMeasure m(1);
  m.add(vec1(1.0), w);
  m.add(vec1(-1.0), w);
  JumpOp op;
  op.mu = [m](const Vec&) { return m; };
  return op;
}

}  // namespace

TEST_CASE("jump evaluation on the square") {
  const OperatorPtr op = OperatorSpec::jump(unit_walk());
  const ScalarField f = ScalarField::quadratic(2 * Mat::Identity(1, 1), vec1(0), 0);  // x^2
  for (double x : {-2.0, 0.0, 0.7, 3.1}) {
    CHECK(eval(op, f, vec1(x)) == Catch::Approx(2.0).margin(1e-12));
  }
}

TEST_CASE("diffusion evaluation on half-square") {
  DiffusionOp d;
  d.sigma = [](const Vec&) { return Mat(Mat::Identity(3, 3)); };
  const OperatorPtr op = OperatorSpec::diffusion(d);
  const ScalarField f = ScalarField::quadratic(Mat::Identity(3, 3), Vec::Zero(3), 0);
  Vec x(3);
  x << 1, -2, 0.5;
  CHECK(eval(op, f, x) == Catch::Approx(1.5));  // q/2
}

TEST_CASE("drift with convex part vanishes at the flat point") {
  DriftConvexOp b;
  b.b = [](const Vec& x) { return Vec(-x); };
  b.Hconv = [](const Vec& p) { return 0.5 * p.squaredNorm(); };
  const OperatorPtr op = OperatorSpec::drift(b);
  CHECK(eval(op, containment_v(), vec1(0.0)) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("sum evaluation is additive") {
  DriftConvexOp b;
  b.b = [](const Vec& x) { return Vec(-x); };
  b.Hconv = [](const Vec&) { return 0.0; };
  const OperatorPtr d = OperatorSpec::drift(b);
  const OperatorPtr j = OperatorSpec::jump(unit_walk());
  const OperatorPtr s = OperatorSpec::sum({d, j});
  const ScalarField f = containment_v();
  for (double x : {-1.0, 0.0, 2.0}) {
    CHECK(eval(s, f, vec1(x)) ==
          Catch::Approx(eval(d, f, vec1(x)) + eval(j, f, vec1(x))).margin(1e-15));
  }
}

TEST_CASE("diffusion and jump leaves are linear on their domain") {
  DiffusionOp d;
  d.sigma = [](const Vec& x) { return Mat(Mat::Identity(1, 1) * (1 + 0.1 * x[0] * x[0])); };
  const OperatorPtr diff = OperatorSpec::diffusion(d);
  const OperatorPtr jump = OperatorSpec::jump(unit_walk(0.5));
  const auto battery = doc::field_battery(1, 6, 17);
  DeterministicRng rng(3);
  for (const OperatorPtr& op : {diff, jump}) {
    for (int k = 0; k + 1 < static_cast<int>(battery.size()); k += 2) {
      const double a = rng.uniform(-2, 2);
      const Vec x = vec1(rng.uniform(-1, 1));
      const ScalarField combo = linear_combination(a, battery[k], 1.0, battery[k + 1]);
      const double lhs = eval(op, combo, x);
      const double rhs = a * eval(op, battery[k], x) + eval(op, battery[k + 1], x);
      CHECK(lhs == Catch::Approx(rhs).margin(1e-10 * (1 + std::abs(rhs))));
    }
  }
}

TEST_CASE("maximum principle spot-check for state-independent leaves") {
  // f2 = f1 + d^2(., x0): the difference f1 - f2 peaks at x0.
  const OperatorPtr diff = OperatorSpec::diffusion(
      DiffusionOp{[](const Vec&) { return Mat(Mat::Identity(1, 1)); }, {}, {}});
  const OperatorPtr jump = OperatorSpec::jump(unit_walk());
  const auto battery = doc::field_battery(1, 4, 23);
  for (const OperatorPtr& op : {diff, jump}) {
    for (const auto& f1 : battery) {
      for (double x0 : {-0.5, 0.0, 1.0}) {
        const ScalarField bump =
            ScalarField::quadratic(2 * Mat::Identity(1, 1), vec1(-2 * x0), x0 * x0);
        const ScalarField f2 = linear_combination(1.0, f1, 1.0, bump);
        CHECK(eval(op, f1, vec1(x0)) <= eval(op, f2, vec1(x0)) + 1e-8);
      }
    }
  }
}

TEST_CASE("isaacs node with singleton grids reduces to sum minus cost") {
  OperatorSpec::Isaacs node;
  node.theta1 = {vec1(0)};
  node.theta2 = {vec1(0)};
  node.component = {{OperatorSpec::jump(unit_walk())}};
  node.cost.cost = [](const Vec& x, int, int) { return 0.25 * x[0]; };
  const OperatorPtr op = OperatorSpec::isaacs(std::move(node));
  const ScalarField f = ScalarField::quadratic(2 * Mat::Identity(1, 1), vec1(0), 0);
  CHECK(eval(op, f, vec1(2.0)) == Catch::Approx(2.0 - 0.5));
}

TEST_CASE("isaacs gap: singleton, separable, and matching-pennies payoffs") {
  const SampleCloud K = SampleCloud::grid1d(-1, 1, 5);
  const ScalarField f = ScalarField::constant(1, 0.0);

  auto game = [&](const Mat& payoff) {
    OperatorSpec::Isaacs node;
    for (int i = 0; i < payoff.rows(); ++i) node.theta1.push_back(vec1(i));
    for (int j = 0; j < payoff.cols(); ++j) node.theta2.push_back(vec1(j));
    node.component.assign(payoff.rows(),
                          std::vector<OperatorPtr>(payoff.cols(), OperatorSpec::sum({})));
    node.cost.cost = [payoff](const Vec&, int i, int j) { return -payoff(i, j); };
    return OperatorSpec::isaacs(std::move(node));
  };

  Mat singleton(2, 1);
  singleton << 1, 0;
  CHECK(check_isaacs(*game(singleton), f, K).stats.at("max_gap") == 0.0);

  Mat separable(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) separable(i, j) = (i + 1) + 3.0 * j;
  CHECK(check_isaacs(*game(separable), f, K).stats.at("max_gap") == 0.0);

  Mat pennies(2, 2);
  pennies << 1, 0, 0, 1;
  const CheckReport rep = check_isaacs(*game(pennies), f, K);
  CHECK(rep.stats.at("max_gap") == 1.0);
  CHECK_FALSE(rep.passed);
}

TEST_CASE("semi-monotone certification") {
  const std::vector<double> alphas{2.0, 10.0, 100.0, 1000.0};

  SECTION("contraction drift passes with zero envelope") {
    DriftConvexOp b;
    b.b = [](const Vec& x) { return Vec(-x); };
    b.Hconv = [](const Vec&) { return 0.0; };
    const SampleCloud K = SampleCloud::uniform_ball(Vec::Zero(1), 1.0, 30, 11);
    const CheckReport rep = check_semi_monotone(b, K, alphas);
    CHECK(rep.passed);
    CHECK(rep.stats.at("max_lhs") <= 0.0);
  }

  SECTION("expanding drift passes with a linear envelope") {
    DriftConvexOp b;
    b.b = [](const Vec& x) { return x; };
    b.Hconv = [](const Vec&) { return 0.0; };
    std::vector<Vec> pts;
    for (int i = 0; i <= 20; ++i) pts.push_back(vec1(-1.0 + 0.1 * i));
    for (double d : {1e-5, 1e-4, 1e-3}) pts.push_back(vec1(0.5 + d));
    const CheckReport rep =
        check_semi_monotone(b, SampleCloud::explicit_points(pts), {10.0});
    CHECK(rep.passed);  // LHS = alpha d^2 <= abscissa
  }

  SECTION("square-root drift fails near the origin") {
    DriftConvexOp b;
    b.b = [](const Vec& x) {
      return vec1((x[0] >= 0 ? 1.0 : -1.0) * std::sqrt(std::abs(x[0])));
    };
    b.Hconv = [](const Vec&) { return 0.0; };
    std::vector<Vec> pts;
    for (double d : {1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.5}) {
      pts.push_back(vec1(d));
      pts.push_back(vec1(-d));
    }
    const CheckReport rep =
        check_semi_monotone(b, SampleCloud::explicit_points(pts), alphas);
    CHECK_FALSE(rep.passed);
    CHECK(!rep.witness.empty());
  }
}

TEST_CASE("lyapunov bound estimates") {
  const ScalarField V = containment_v();
  const SampleCloud K = SampleCloud::grid1d(-2, 2, 81);

  SECTION("unit diffusion attains 1/2 at the origin") {
    DiffusionOp d;
    d.sigma = [](const Vec&) { return Mat(Mat::Identity(1, 1)); };
    const OperatorPtr op = OperatorSpec::diffusion(d);
    // Dense 1-D grid-scan oracle for sup of V''(x)/2.
    double oracle = -kPlusInfinity;
    for (int i = 0; i <= 20000; ++i) {
      const double x = -20.0 + 40.0 * i / 20000.0;
      oracle = std::max(oracle, 0.5 * V.hessian(vec1(x))(0, 0));
    }
    CHECK(oracle == Catch::Approx(0.5).margin(1e-6));
    const LyapunovEstimate est = lyapunov_bound(*op, V, K);
    CHECK(est.c_V == Catch::Approx(0.5).margin(1e-4));
    CHECK(est.plateaued);
  }

  SECTION("contraction drift attains zero at the origin") {
    DriftConvexOp b;
    b.b = [](const Vec& x) { return Vec(-x); };
    b.Hconv = [](const Vec&) { return 0.0; };
    const LyapunovEstimate est = lyapunov_bound(*OperatorSpec::drift(b), V, K);
    CHECK(est.c_V == Catch::Approx(0.0).margin(1e-9));
  }

  SECTION("unit walk is finite and below the per-atom log bound") {
    const OperatorPtr op = OperatorSpec::jump(unit_walk());
    double oracle = -kPlusInfinity;
    for (int i = 0; i <= 20000; ++i) {
      const Vec x = vec1(-20.0 + 40.0 * i / 20000.0);
      oracle = std::max(oracle, eval(op, V, x));
    }
    const LyapunovEstimate est = lyapunov_bound(*op, V, K);
    CHECK(est.c_V == Catch::Approx(oracle).margin(1e-4));
    CHECK(est.c_V <= 2 * std::log(2.0) + 1e-12);
  }
}

TEST_CASE("measure family certification") {
  const SampleCloud K = SampleCloud::grid1d(0.05, 1.0, 20);

  SECTION("constant family integrates W to log 2") {
    DiscreteMeasure m(1);
    m.add(vec1(1.0), 1.0);
    const CheckReport rep =
        check_measure_family([m](const Vec&) { return m; }, K);
    CHECK(rep.passed);
    CHECK(rep.stats.at("sup_W_integral") == Catch::Approx(std::log(2.0)).margin(1e-12));
  }

  SECTION("exploding weights near zero fail the uniform bound") {
    auto mu = [](const Vec& x) {
      DiscreteMeasure m(1);
      m.add(vec1(1.0), 1.0 / std::abs(x[0]));
      return m;
    };
    const CheckReport rep = check_measure_family(mu, K, CutProfile(), 10.0);
    CHECK_FALSE(rep.passed);
    CHECK(!rep.witness.empty());
  }

  SECTION("empty measures pass with zero integral") {
    const CheckReport rep =
        check_measure_family([](const Vec&) { return DiscreteMeasure(1); }, K);
    CHECK(rep.passed);
    CHECK(rep.stats.at("sup_W_integral") == 0.0);
  }
}

TEST_CASE("discrete measures reject origin atoms and negative weights") {
  DiscreteMeasure m(1);
  CHECK_THROWS(m.add(vec1(0.0), 1.0));
  CHECK_THROWS(m.add(vec1(1.0), -0.5));
}

TEST_CASE("cut profile default shape") {
  const CutProfile cut;
  CHECK(cut(0.0) == 1.0);
  CHECK(cut(0.4) == 1.0);
  CHECK(cut(1.0) == 0.0);
  CHECK(cut(2.0) == 0.0);
  CHECK(cut(0.75) > 0.0);
  CHECK(cut(0.75) < 1.0);
}

TEST_CASE("isaacs node errors when every theta2 is priced out") {
  OperatorSpec::Isaacs node;
  node.theta1 = {vec1(0)};
  node.theta2 = {vec1(0), vec1(1)};
  node.component = {{OperatorSpec::sum({}), OperatorSpec::sum({})}};
  node.cost.cost = [](const Vec&, int, int) { return kPlusInfinity; };
  const OperatorPtr op = OperatorSpec::isaacs(std::move(node));
  CHECK_THROWS(eval(op, ScalarField::constant(1, 0.0), vec1(0.0)));
}
