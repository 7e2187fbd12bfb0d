#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "xfwi/error.hpp"
#include "xfwi/experiments.hpp"
#include "xfwi/selftest.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kNumerical = 2, kBudget = 3 };

struct Common {
  std::string config;
  std::string out;
  std::string store = "mem";
  int threads = 1;
  std::uint64_t seed = 1;
  std::vector<std::string> overrides;
  bool quiet = false;
};

xfwi::ExperimentContext make_context(const Common& c, const std::string& recipe) {
  xfwi::ExperimentContext ctx;
  const std::filesystem::path cfg = c.config.empty() ? xfwi::default_config_path(recipe) : std::filesystem::path(c.config);
  ctx.cfg = xfwi::KeyValueConfig::load(cfg);
  ctx.cfg.apply_overrides(c.overrides);
  ctx.out_dir = c.out.empty() ? std::filesystem::path("out") / recipe : std::filesystem::path(c.out);
  ctx.store = xfwi::WavefieldStore::from_spec(c.store);
  if (c.threads < 1) throw xfwi::ConfigError("--threads must be >= 1");
  ctx.threads = c.threads;
  ctx.seed = c.seed;
  ctx.verbose = !c.quiet;
  return ctx;
}

int run_selftest(const std::vector<std::string>& suites, bool break_adjoint) {
  xfwi::SelftestOptions opts;
  opts.suites = suites;
  opts.break_adjoint = break_adjoint;
  int failed = 0;
  for (const auto& c : xfwi::run_selftest(opts)) {
    std::printf("%s %s/%s value=%.3e tol=%.1e\n", c.passed ? "PASS" : "FAIL", c.suite.c_str(), c.name.c_str(),
                c.value, c.tolerance);
    failed += !c.passed;
  }
  std::printf("%d failure(s)\n", failed);
  return failed ? kNumerical : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-domain FWI / WRI / ESI toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  app.add_option("--config", c.config, "key=value configuration file");
  app.add_option("--out", c.out, "output directory");
  app.add_option("--store", c.store, "wavefield store: mem or disk:<path>");
  app.add_option("--threads", c.threads, "shot-parallel workers");
  app.add_option("--seed", c.seed, "random seed");
  app.add_option("--set", c.overrides, "override a config entry, key=value (repeatable)");
  app.add_flag("--quiet,-q", c.quiet, "no progress output");

  auto* fwd = app.add_subcommand("forward", "model shot gathers in the configured true model");

  auto* exp = app.add_subcommand("experiment", "run an experiment recipe");
  std::string name;
  exp->add_option("name", name, "recipe name")->required()->check(CLI::IsMember(xfwi::experiment_names()));

  auto* st = app.add_subcommand("selftest", "adjointness, gradient, dense-oracle and SMW checks");
  std::vector<std::string> suites = xfwi::selftest_suites();
  bool break_adjoint = false;
  bool no_suites = false;
  st->add_option("--suite", suites, "suites to run (default: all)")->delimiter(',');
  st->add_flag("--none", no_suites, "select no suite");
  st->add_flag("--break-adjoint", break_adjoint, "test hook: corrupt the adjoint of S");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*fwd) {
      xfwi::run_forward(make_context(c, "forward"));
    } else if (*exp) {
      xfwi::run_experiment(name, make_context(c, name));
    } else if (*st) {
      if (no_suites) suites.clear();
      return run_selftest(suites, break_adjoint);
    }
  } catch (const xfwi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const xfwi::BudgetExceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n";
    return kBudget;
  } catch (const xfwi::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
  return kOk;
}
