// robustlaw: command-line driver.

#include "robustlaw/config.hpp"
#include "robustlaw/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace robustlaw;

namespace {

// Output directory and formats may also come from the config's output block.
void apply_output_block(CommandOptions& opts, bool out_given) {
  if (opts.config_path.empty()) return;
  try {
    const Config cfg = Config::load(opts.config_path);
    if (!out_given && cfg.has("output.dir")) opts.out_dir = cfg.get_string("output.dir");
    if (opts.formats.empty() && cfg.has("output.formats")) {
      opts.formats = cfg.get_string_list("output.formats");
    }
  } catch (const Error&) {
    // reported again, with the proper exit code, by the subcommand itself
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for the law of robustness under Bregman losses"};
  app.require_subcommand(1);

  CommandOptions opts;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opts.config_path, "config file");
    if (needs_config) c->required();
    sub->add_option("--seed", seed, "override run.seed and model.seed");
    sub->add_option("--out", opts.out_dir, "output directory");
    sub->add_option("--jobs", opts.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--format", opts.formats, "csv|json|svg (repeatable)")
        ->check(CLI::IsMember({"csv", "json", "svg"}));
  };

  auto* verify = app.add_subcommand("verify-identities", "divergence and decomposition identity suites");
  common(verify, false);
  verify->add_flag("--sabotage", opts.sabotage)->group("");

  auto* conc = app.add_subcommand("check-concentration", "Monte Carlo tail checks");
  common(conc, true);
  conc->add_option("--statements", opts.statements, "Obs33 Obs34 Obs35 Lem36 Lem51 Lem52 Hoeffding VectorBD Azuma")
      ->delimiter(',');

  auto* bound = app.add_subcommand("compute-bound", "evaluate the robustness bound for a config");
  common(bound, true);

  auto* run = app.add_subcommand("run-experiment", "sample, overfit, measure and compare to the floor");
  common(run, true);

  auto* report = app.add_subcommand("report", "aggregate report.json files");
  common(report, false);
  report->add_option("inputs", opts.inputs, "report files, directories or glob patterns")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed") > 0) opts.seed = seed;
    apply_output_block(opts, sub->count("--out") > 0);
  }

  if (verify->parsed()) return cmd_verify_identities(opts, std::cout, std::cerr);
  if (conc->parsed()) return cmd_check_concentration(opts, std::cout, std::cerr);
  if (bound->parsed()) return cmd_compute_bound(opts, std::cout, std::cerr);
  if (run->parsed()) return cmd_run_experiment(opts, std::cout, std::cerr);
  if (report->parsed()) return cmd_report(opts, std::cout, std::cerr);
  return 2;
}
