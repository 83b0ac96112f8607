#include "hjcp/document.hpp"
#include "hjcp/runner.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

using namespace hjcp;

namespace {

double ev(const std::string& src, double x) { return expr::parse(src, 1)(vec1(x)); }

std::string documents_dir() {
  // Tests run from the build tree; the documents sit next to the sources.
  for (const char* candidate : {"../documents", "../../documents", "documents"}) {
    if (std::filesystem::exists(std::string(candidate) + "/brownian.json")) return candidate;
  }
  return "../../documents";
}

}  // namespace

TEST_CASE("expression grammar") {
  CHECK(ev("1+2*3", 0) == 7.0);
  CHECK(ev("8-3-2", 0) == 3.0);  // left associative
  CHECK(ev("8/4/2", 0) == 1.0);
  CHECK(ev("-x1*x1", 2) == -4.0);
  CHECK(ev("pow(x1,3)", 2) == 8.0);
  CHECK(ev("exp(0)", 0) == 1.0);
  CHECK(ev("log(exp(1))", 0) == Catch::Approx(1.0));
  CHECK(ev("tanh(0)", 0) == 0.0);
  CHECK(ev("min(1,2)+max(1,2)", 0) == 3.0);
  CHECK(ev("2*(x1+1)", 1) == 4.0);
  CHECK(ev("1e2+0.5", 0) == 100.5);
  CHECK(ev("-(x1-1)", 3) == -2.0);
  CHECK(expr::parse("p1*p1", 2, 'p')(vec2(3, 0)) == 9.0);

  CHECK_THROWS_AS(expr::parse("x2", 1), std::invalid_argument);
  CHECK_THROWS_AS(expr::parse("foo(1)", 1), std::invalid_argument);
  CHECK_THROWS_AS(expr::parse("1+", 1), std::invalid_argument);
  CHECK_THROWS_AS(expr::parse("1 2", 1), std::invalid_argument);
  CHECK_THROWS_AS(expr::parse("min(1)", 1), std::invalid_argument);
}

TEST_CASE("document parsing") {
  const doc::json j = {
      {"dimension", 1},
      {"seed", 5},
      {"operator",
       {{"kind", "sum"},
        {"terms",
         {{{"kind", "diffusion"}, {"sigma", {{"1"}}}},
          {{"kind", "drift"}, {"b", {"-x1"}}, {"hconv", {{"kind", "half_square"}}}},
          {{"kind", "jump"},
           {"atoms", {{{"z", {1.0}}, {"w", 0.5}}, {{"z", {-1.0}}, {"w", 0.5}}}}}}}}},
      {"coupling", {{"kind", "synchronous"}}},
      {"penalty", {{"collection", 2}, {"R", 1.0}, {"Rp", 2.0}, {"Rpp", 3.0}}},
  };
  const doc::ProblemDocument d = doc::ProblemDocument::from_json(j);
  CHECK(d.dimension == 1);
  CHECK(d.family.collection == 2);
  REQUIRE(d.op);
  REQUIRE(d.coupling);
  // The parsed operator evaluates: diffusion 1/2 V'' + drift + jump.
  const ScalarField V = d.containment.V;
  const double v0 = eval(d.op, V, vec1(0.0));
  CHECK(v0 == Catch::Approx(0.5 + 0.0 + std::log(1.5)).margin(1e-9));

  CHECK_THROWS_AS(doc::ProblemDocument::from_json(doc::json::array()), doc::SchemaError);
  CHECK_THROWS_AS(
      doc::ProblemDocument::from_json(doc::json{{"operator", {{"kind", "mystery"}}}}),
      doc::SchemaError);
}

TEST_CASE("cloud descriptors") {
  const doc::json g = {{"kind", "grid"}, {"lo", {-1.0}}, {"hi", {1.0}}, {"counts", {5}}};
  const SampleCloud grid = doc::parse_cloud(g, "$", 1);
  CHECK(grid.size() == 5);
  const doc::json b = {
      {"kind", "ball"}, {"center", {0.0, 0.0}}, {"radius", 2.0}, {"count", 7}, {"seed", 3}};
  CHECK(doc::parse_cloud(b, "$", 1).size() == 7);
  CHECK_THROWS_AS(doc::parse_cloud(doc::json{{"kind", "torus"}}, "$", 1), doc::SchemaError);
}

TEST_CASE("bundled check documents") {
  const std::string dir = documents_dir();
  run::Options opt;
  opt.out_dir = "test_out";

  SECTION("brownian document passes every declared check") {
    const run::Outcome out = run::cmd_check(dir + "/brownian.json", opt);
    INFO(out.report.dump(2));
    CHECK(out.exit_code == 0);
    CHECK(out.report["summary"]["failed"].get<int>() == 0);
  }

  SECTION("broken coupling is caught with a witness") {
    const run::Outcome out = run::cmd_check(dir + "/broken-coupling.json", opt);
    CHECK(out.exit_code == 1);
    bool found = false;
    for (const auto& c : out.report["checks"]) {
      if (c["name"] == "coupling_identity" && !c["passed"].get<bool>() &&
          !c["witness"].get<std::string>().empty())
        found = true;
    }
    CHECK(found);
  }

  SECTION("empty checks list exits cleanly") {
    const doc::json j = {{"dimension", 1}, {"checks", doc::json::array()}};
    const std::string p = "test_out/empty_checks.json";
    std::filesystem::create_directories("test_out");
    std::ofstream(p) << j.dump();
    const run::Outcome out = run::cmd_check(p, opt);
    CHECK(out.exit_code == 0);
    CHECK(out.report["checks"].empty());
  }

  SECTION("missing document exits with schema error") {
    const run::Outcome out = run::cmd_check(dir + "/no-such-file.json", opt);
    CHECK(out.exit_code == 2);
  }
}

TEST_CASE("bundled solve document") {
  const std::string dir = documents_dir();
  run::Options opt;
  opt.out_dir = "test_out";

  SECTION("walk50 passes contraction and strict estimates") {
    const run::Outcome out = run::cmd_solve(dir + "/walk50.json", opt);
    INFO(out.report.dump(2));
    CHECK(out.exit_code == 0);
    CHECK(out.report["contraction"]["passed"].get<bool>());
    CHECK(out.report["contraction"]["stats"]["pairs"].get<double>() == 100.0);
    for (const auto& s : out.report["strict"]) {
      CHECK(s["passed"].get<bool>());
      CHECK(s["states_beyond_apriori_Khat"].get<int>() > 0);
    }
  }

  SECTION("lambda = 0 is a schema error") {
    doc::json j = doc::json::parse(run::detail::read_file(dir + "/walk50.json"));
    j["resolvent"]["lambda"] = 0.0;
    std::filesystem::create_directories("test_out");
    std::ofstream("test_out/bad_lambda.json") << j.dump();
    const run::Outcome out = run::cmd_solve("test_out/bad_lambda.json", opt);
    CHECK(out.exit_code == 2);
  }

  SECTION("h table length mismatch names the field") {
    doc::json j = doc::json::parse(run::detail::read_file(dir + "/walk50.json"));
    j["resolvent"]["h"] = {1.0, 2.0, 3.0};
    std::ofstream("test_out/bad_h.json") << j.dump();
    const run::Outcome out = run::cmd_solve("test_out/bad_h.json", opt);
    CHECK(out.exit_code == 2);
    CHECK(out.report["error"].get<std::string>().find("$.resolvent.h") != std::string::npos);
  }
}

TEST_CASE("bundled trace documents") {
  const std::string dir = documents_dir();
  run::Options opt;
  opt.out_dir = "test_out";

  SECTION("symmetric document keeps all distances at zero") {
    const run::Outcome out = run::cmd_trace(dir + "/symmetric-trace.json", opt);
    INFO(out.report.dump(2));
    CHECK(out.exit_code == 0);
    CHECK(out.report["summary"]["final_alpha_d2_y0"].get<double>() == 0.0);
    CHECK(out.report["summary"]["final_alpha_sum_dist_sq"].get<double>() <= 1e-12);
  }

  SECTION("schedule of length one flags missing trend data") {
    run::Options o = opt;
    o.schedule = {4.0};
    const run::Outcome out = run::cmd_trace(dir + "/symmetric-trace.json", o);
    CHECK(out.exit_code == 0);
    bool flagged = false;
    for (const auto& f : out.report["summary"]["flags"])
      if (f.get<std::string>().find("no trend data") != std::string::npos) flagged = true;
    CHECK(flagged);
  }
}

TEST_CASE("report merge") {
  run::Options opt;
  opt.out_dir = "test_out";
  std::filesystem::create_directories("test_out");
  std::ofstream("test_out/r1.json") << doc::json{{"summary", {{"failed", 0}}}}.dump();
  std::ofstream("test_out/r2.json") << doc::json{{"summary", {{"failed", 1}}}}.dump();
  CHECK(run::cmd_report_merge({"test_out/r1.json"}, opt).exit_code == 0);
  CHECK(run::cmd_report_merge({"test_out/r1.json", "test_out/r2.json"}, opt).exit_code == 1);
  CHECK(run::cmd_report_merge({"test_out/nope.json"}, opt).exit_code == 2);
}
