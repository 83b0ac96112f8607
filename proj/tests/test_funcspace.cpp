#include "hjcp/funcspace.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace hjcp;

TEST_CASE("distance_sq basics") {
  CHECK(distance_sq(vec2(0, 0), vec2(0, 0)) == 0.0);
  CHECK(distance_sq(vec2(1, 0), vec2(0, 1)) == 2.0);
  CHECK(distance_sq(vec2(3, 4), vec2(0, 0)) == 25.0);
  CHECK_THROWS(distance_sq(vec1(0), vec2(0, 0)));
}

TEST_CASE("shifted distance") {
  CHECK(shifted_distance_sq(vec1(2), vec1(2), vec1(0.3), vec1(0.3)) == 0.0);
  CHECK(shifted_distance_sq(vec1(2), vec1(1), vec1(1), vec1(0)) == 0.0);
  CHECK(shifted_distance_sq(vec1(2), vec1(0), vec1(0), vec1(1)) == 9.0);
}

TEST_CASE("shift invariance on samples") {
  DeterministicRng rng(5);
  for (int i = 0; i < 200; ++i) {
    Vec a = vec2(rng.uniform(-3, 3), rng.uniform(-3, 3));
    Vec b = vec2(rng.uniform(-3, 3), rng.uniform(-3, 3));
    Vec z = vec2(rng.uniform(-3, 3), rng.uniform(-3, 3));
    CHECK(shifted_distance_sq(a, b, z, z) == Catch::Approx(distance_sq(a, b)).margin(1e-12));
  }
}

TEST_CASE("parallelogram-style expansion") {
  DeterministicRng rng(6);
  for (int i = 0; i < 200; ++i) {
    Vec a = vec2(rng.uniform(-2, 2), rng.uniform(-2, 2));
    Vec b = vec2(rng.uniform(-2, 2), rng.uniform(-2, 2));
    Vec u = vec2(rng.uniform(-2, 2), rng.uniform(-2, 2));
    Vec v = vec2(rng.uniform(-2, 2), rng.uniform(-2, 2));
    const double lhs = distance_sq(a + u, b + v);
    const double rhs = distance_sq(a, b) + 2 * (a - b).dot(u - v) + distance_sq(u, v);
    CHECK(lhs == Catch::Approx(rhs).margin(1e-10));
  }
}

TEST_CASE("fd_gradient oracle values") {
  ScalarField sq(1, [](const Vec& x) { return x[0] * x[0]; }, Smoothness::Cinf);
  CHECK(fd_gradient(sq, vec1(1.0), 1e-4)[0] == Catch::Approx(2.0).margin(1e-7));

  ScalarField c = ScalarField::constant(1, 3.5);
  CHECK(fd_gradient(c, vec1(0.7), 1e-4)[0] == Catch::Approx(0.0).margin(1e-12));

  ScalarField logf(1, [](const Vec& x) { return std::log1p(0.5 * x[0] * x[0]); },
                   Smoothness::Cinf);
  CHECK(fd_gradient(logf, vec1(1.0), 1e-5)[0] == Catch::Approx(2.0 / 3.0).margin(1e-8));
}

TEST_CASE("declared gradients agree with finite differences on a cloud") {
  // max over a 100-point cloud of |fd - grad| <= 10 h (1 + |grad|), h = 1e-5.
  Mat A(2, 2);
  A << 1.0, 0.3, 0.3, 2.0;
  const ScalarField f = ScalarField::quadratic(A, vec2(0.5, -1.0), 0.2);
  const SampleCloud cloud = SampleCloud::uniform_ball(Vec::Zero(2), 3.0, 100, 77);
  const double h = 1e-5;
  for (const Vec& x : cloud.points()) {
    const Vec g = f.gradient(x);
    const double err = (fd_gradient(f, x, h) - g).norm();
    CHECK(err <= 10 * h * (1 + g.norm()));
  }
}

TEST_CASE("declared bounds are enforced") {
  ScalarField f(1, [](const Vec& x) { return x[0]; }, Smoothness::Cinf);
  f.bound_above = 0.5;
  CHECK(f.value(vec1(0.25)) == 0.25);
  CHECK_THROWS_AS(f.value(vec1(1.0)), std::domain_error);
}

TEST_CASE("hessian symmetry is enforced") {
  ScalarField bad(1, [](const Vec&) { return 0.0; }, [](const Vec&) { return vec1(0.0); },
                  [](const Vec&) {
                    Mat m(2, 2);
                    m << 0, 1, 0, 0;
                    return m;
                  });
  CHECK_THROWS(bad.hessian(vec1(0.0)));
}

TEST_CASE("shifted field composes with s_z") {
  ScalarField base(1, [](const Vec& x) { return x[0] * x[0] * x[0]; }, Smoothness::Cinf);
  const ScalarField f = shifted(base, vec1(2.0));
  CHECK(f.value(vec1(3.0)) == Catch::Approx(1.0));
  const ShiftedField sf{base, vec1(2.0)};
  CHECK(as_field(sf).value(vec1(5.0)) == Catch::Approx(27.0));
}

TEST_CASE("sample clouds regenerate bit-identically") {
  const SampleCloud a = SampleCloud::uniform_ball(Vec::Zero(2), 1.5, 64, 99);
  const SampleCloud b = SampleCloud::uniform_ball(Vec::Zero(2), 1.5, 64, 99);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.points()[i][0] == b.points()[i][0]);
    CHECK(a.points()[i][1] == b.points()[i][1]);
  }
  const SampleCloud g = SampleCloud::grid1d(-1, 1, 21);
  CHECK(g.mesh_estimate() == Catch::Approx(0.1));
  CHECK(g.size() == 21);
  CHECK_THROWS(SampleCloud::explicit_points({}));
}

TEST_CASE("direct sums live on the product space") {
  const ScalarField f1 = ScalarField::quadratic(Mat::Identity(1, 1), vec1(0), 0);
  const ScalarField f2 = ScalarField::quadratic(2 * Mat::Identity(1, 1), vec1(0), 1);
  const ScalarField s = direct_sum(f1, f2);
  CHECK(s.value(vec2(1, 2)) == Catch::Approx(0.5 + 4 + 1));
  const ScalarField d = ominus(f1, f2);
  CHECK(d.value(vec2(1, 2)) == Catch::Approx(0.5 - 5));
  CHECK(s.gradient(vec2(1, 2))[1] == Catch::Approx(4.0));
}
