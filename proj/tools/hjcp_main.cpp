// Batch front door: check / solve / trace / report pipelines over problem
// documents. No interactive mode; reports are written for CI consumption.
#include "hjcp/runner.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

hjcp::run::Options make_options(const std::string& out_dir, double tol_scale,
                                const std::vector<double>& schedule, long long seed,
                                bool has_seed) {
  hjcp::run::Options opt;
  opt.out_dir = out_dir;
  opt.tolerance_scale = tol_scale;
  opt.schedule = schedule;
  opt.has_seed = has_seed;
  opt.seed = static_cast<std::uint64_t>(seed);
  const char* threads = std::getenv("HJCP_THREADS");
  (void)threads;  // single document per process; modules run sequentially
  return opt;
}

int emit(const hjcp::run::Outcome& out) {
  std::cout << out.report.dump(2) << "\n";
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coupling-based comparison-principle toolkit"};
  app.require_subcommand(1);

  std::string document;
  std::string out_dir = ".";
  double tol_scale = 1.0;
  std::vector<double> schedule;
  long long seed = 0;
  bool has_seed = false;

  auto add_common = [&](CLI::App* cmd, bool needs_doc = true) {
    if (needs_doc) cmd->add_option("document", document, "problem document (JSON)")->required();
    cmd->add_option("--out-dir", out_dir, "output directory");
    cmd->add_option("--tolerance-scale", tol_scale, "scale factor for check tolerances");
    cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
      has_seed = true;
    });
  };

  auto* check = app.add_subcommand("check", "run the declared hypothesis checks");
  add_common(check);

  auto* solve = app.add_subcommand("solve", "resolvent solves with verification");
  add_common(solve);

  auto* trace = app.add_subcommand("trace", "doubling-of-variables trace");
  add_common(trace);
  trace->add_option("--schedule", schedule, "alpha schedule override");

  std::vector<std::string> merge_inputs;
  auto* report = app.add_subcommand("report", "merge reports");
  report->add_option("--merge", merge_inputs, "report files to merge")->required();
  report->add_option("--out-dir", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 2 : 0;
  }

  const hjcp::run::Options opt = make_options(out_dir, tol_scale, schedule, seed, has_seed);
  try {
    if (check->parsed()) return emit(hjcp::run::cmd_check(document, opt));
    if (solve->parsed()) return emit(hjcp::run::cmd_solve(document, opt));
    if (trace->parsed()) return emit(hjcp::run::cmd_trace(document, opt));
    if (report->parsed()) return emit(hjcp::run::cmd_report_merge(merge_inputs, opt));
  } catch (const std::exception& e) {
    std::cout << "{\n  \"error\": \"" << e.what() << "\"\n}\n";
    return 2;
  }
  return 2;
}
