#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dvc/cli.hpp"

namespace {

using dvc::cli::Status;

struct Options {
  std::string registry, a, b, labels, config, out, decoder = "logreg", kind, spec;
  std::uint64_t seed = 0;
  unsigned threads = dvc::default_thread_count();
  std::vector<std::string> inputs;
};

std::optional<dvc::fs::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return dvc::fs::path(s);
}

dvc::cli::RunConfig run_config(const Options& o) {
  auto rc = dvc::cli::load_run_config(optional_path(o.config));
  rc.dvc.seed = o.seed;
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision variable correlation, error consistency and RSA between observers"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool with_config = true) {
    sub->add_option("--seed", o.seed, "Random seed (required)")->required();
    sub->add_option("--out", o.out, "Output directory")->required();
    if (with_config) sub->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  auto pair_inputs = [&](CLI::App* sub) {
    sub->add_option("--a", o.a, "First observer matrix (CSV or rawbin)")->required()->check(CLI::ExistingFile);
    sub->add_option("--b", o.b, "Second observer matrix (CSV or rawbin)")->required()->check(CLI::ExistingFile);
    sub->add_option("--labels", o.labels, "Label file shared by both observers")
        ->required()
        ->check(CLI::ExistingFile);
  };

  auto* pair = app.add_subcommand("dvc-pair", "DVC between two observers");
  pair_inputs(pair);
  common(pair);

  auto* matrix = app.add_subcommand("dvc-matrix", "DVC for every observer pair in a registry");
  matrix->add_option("--registry", o.registry, "Observer registry (JSON)")->required()->check(CLI::ExistingFile);
  common(matrix);

  auto* kappa = app.add_subcommand("kappa", "Cohen's kappa on decoded decisions");
  pair_inputs(kappa);
  kappa->add_option("--decoder", o.decoder, "Behavioral decoder")->check(CLI::IsMember({"logreg", "groupmean"}));
  common(kappa);

  auto* rsa = app.add_subcommand("rsa", "Category-level RSA");
  pair_inputs(rsa);
  common(rsa, false);

  auto* simulate = app.add_subcommand("simulate", "Synthetic validation sweeps");
  simulate->add_option("--kind", o.kind, "Sweep kind")
      ->required()
      ->check(CLI::IsMember({"recovery", "bias", "shared"}));
  simulate->add_option("--spec", o.spec, "Sweep specification (JSON)")->check(CLI::ExistingFile);
  common(simulate);

  auto* report = app.add_subcommand("report", "Merge summary records into one long table");
  report->add_option("inputs", o.inputs, "Summary JSON files")->required()->check(CLI::ExistingFile);
  common(report, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors are fatal; --help exits cleanly.
    return app.exit(e) == 0 ? 0 : dvc::cli::exit_code(Status::fatal);
  }

  try {
    Status status = Status::ok;
    if (*pair) {
      status = dvc::cli::cmd_dvc_pair(o.a, o.b, o.labels, run_config(o), o.out, o.threads);
    } else if (*matrix) {
      status = dvc::cli::cmd_dvc_matrix(o.registry, run_config(o), o.out, o.threads);
    } else if (*kappa) {
      status = dvc::cli::cmd_kappa(o.a, o.b, o.labels, dvc::cli::parse_behavior_decoder(o.decoder), run_config(o),
                                   o.out);
    } else if (*rsa) {
      status = dvc::cli::cmd_rsa(o.a, o.b, o.labels, o.out);
    } else if (*simulate) {
      status = dvc::cli::cmd_simulate(dvc::cli::parse_sim_kind(o.kind), optional_path(o.spec), run_config(o), o.out,
                                      o.threads);
    } else if (*report) {
      std::vector<dvc::fs::path> inputs(o.inputs.begin(), o.inputs.end());
      status = dvc::cli::cmd_report(inputs, o.out);
    }
    if (status == Status::partial) std::cerr << "dvc: completed with degenerate or failed entries\n";
    return dvc::cli::exit_code(status);
  } catch (const dvc::Error& e) {
    std::cerr << "dvc: error [" << dvc::to_string(e.kind()) << "]: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "dvc: error: " << e.what() << "\n";
  }
  return dvc::cli::exit_code(Status::fatal);
}
