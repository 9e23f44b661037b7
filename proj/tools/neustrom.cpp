#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "neustrom/config.hpp"
#include "neustrom/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string seed;
  int trials = -1;
};

void attach_common(CLI::App* cmd, CommonFlags& flags, bool config_required = true) {
  cmd->add_option("--config", flags.config_path, "experiment config file")
      ->required(config_required);
  cmd->add_option("--override", flags.overrides, "section.key=value config override (repeatable)");
  cmd->add_option("--out", flags.out_dir, "output directory (overrides output.dir)");
  cmd->add_option("--seed", flags.seed, "master seed (overrides output.seed)");
  cmd->add_option("--trials", flags.trials, "supervised trial count (overrides train.trials)");
}

/// Parse + validate; on failure prints every problem and returns no config.
std::optional<neustrom::ExperimentConfig> load_config(const CommonFlags& flags) {
  neustrom::ParseResult parsed = neustrom::parse_config_file(flags.config_path);
  neustrom::ValidationReport report;
  report.errors = parsed.errors;
  std::vector<std::string> overrides = flags.overrides;
  if (!flags.out_dir.empty()) overrides.push_back("output.dir=" + flags.out_dir);
  if (!flags.seed.empty()) overrides.push_back("output.seed=" + flags.seed);
  if (flags.trials >= 0) overrides.push_back("train.trials=" + std::to_string(flags.trials));
  neustrom::apply_overrides(parsed.values, overrides, report.errors);
  neustrom::ExperimentConfig cfg = neustrom::resolve_config(parsed.values, report);
  if (!report.ok()) {
    std::cerr << "config validation failed (" << report.errors.size() << " problem"
              << (report.errors.size() == 1 ? "" : "s") << "):\n";
    for (const std::string& e : report.errors) std::cerr << "  - " << e << "\n";
    return std::nullopt;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neustrom: low-rank neural kernel representations of conditional probabilities"};
  app.require_subcommand(1);

  CommonFlags run_flags, validate_flags, eval_flags;
  std::string eval_checkpoint_path;
  std::string export_csv, export_pgm;

  CLI::App* run_cmd = app.add_subcommand("run", "execute an experiment config end to end");
  attach_common(run_cmd, run_flags);

  CLI::App* validate_cmd =
      app.add_subcommand("validate", "check a config and echo the resolved settings");
  attach_common(validate_cmd, validate_flags);

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "re-score an existing checkpoint against a dataset");
  attach_common(eval_cmd, eval_flags);
  eval_cmd->add_option("--checkpoint", eval_checkpoint_path, "model checkpoint (.neus)")
      ->required();

  CLI::App* export_cmd = app.add_subcommand("export", "re-render a heatmap from a CSV matrix");
  export_cmd->add_option("--csv", export_csv, "input CSV matrix")->required();
  export_cmd->add_option("--pgm", export_pgm, "output PGM path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      auto cfg = load_config(run_flags);
      if (!cfg) return kExitValidation;
      neustrom::run_experiment(*cfg, std::cout);
      std::cout << "artifacts written to " << cfg->out_dir << "\n";
      return kExitOk;
    }
    if (validate_cmd->parsed()) {
      auto cfg = load_config(validate_flags);
      if (!cfg) return kExitValidation;
      std::cout << "OK\n";
      for (const auto& [k, v] : cfg->resolved()) std::cout << k << " = " << v << "\n";
      return kExitOk;
    }
    if (eval_cmd->parsed()) {
      auto cfg = load_config(eval_flags);
      if (!cfg) return kExitValidation;
      neustrom::eval_checkpoint(*cfg, eval_checkpoint_path, std::cout);
      std::cout << "artifacts written to " << cfg->out_dir << "\n";
      return kExitOk;
    }
    if (export_cmd->parsed()) {
      neustrom::export_heatmap(export_csv, export_pgm);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
