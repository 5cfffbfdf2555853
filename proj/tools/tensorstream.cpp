// tensorstream: Monte Carlo experiments and stream replay for streaming
// Tucker regression with online inference.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "harness/config.hpp"
#include "harness/experiments.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kNumericalError = 3, kInputError = 4 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  std::optional<long> horizon;
  std::optional<std::string> out;
  std::optional<std::string> stream;
  bool paper_scale = false;
};

void add_common(CLI::App* cmd, Overrides& o, bool with_stream) {
  cmd->add_option("--config", o.config, "key = value configuration file");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--replicates", o.replicates, "Monte Carlo replicates K");
  cmd->add_option("--horizon", o.horizon, "number of SGD steps T");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_flag("--paper-scale", o.paper_scale, "full-size preset (p=20/r=3 or p=30/r=1)");
  if (with_stream) cmd->add_option("--stream", o.stream, "recorded stream file");
}

harness::ExperimentConfig resolve(harness::ExperimentKind kind, const Overrides& o) {
  harness::ExperimentConfig cfg;
  cfg.kind = kind;
  if (!o.config.empty()) harness::apply_config_file(cfg, o.config);
  if (o.paper_scale) harness::apply_paper_scale(cfg);
  if (o.seed) cfg.problem.seed = *o.seed;
  if (o.replicates) cfg.replicates = *o.replicates;
  if (o.horizon) cfg.horizon = *o.horizon;
  if (o.out) cfg.out_dir = *o.out;
  if (o.stream) cfg.stream_path = *o.stream;
  cfg.validate();
  return cfg;
}

void report(const std::vector<std::filesystem::path>& files) {
  for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
}

int run(harness::ExperimentKind kind, const Overrides& o) {
  using harness::ExperimentKind;
  const auto cfg = resolve(kind, o);
  std::cerr << "config " << cfg.hash_hex() << ": " << harness::kind_name(kind) << ", p="
            << tensorstream::dims_string(cfg.problem.dims) << ", r="
            << tensorstream::dims_string(cfg.problem.ranks) << ", T=" << cfg.horizon
            << ", K=" << cfg.replicates << "\n";
  switch (kind) {
    case ExperimentKind::estimation: {
      const auto study = harness::run_estimation_study(cfg);
      report(harness::write_estimation_outputs(cfg, study));
      for (const auto& r : study.replicates)
        if (r.diverged_at)
          std::cerr << "replicate " << r.replicate << " diverged at step " << *r.diverged_at << "\n";
      break;
    }
    case ExperimentKind::normality: {
      const auto study = harness::run_inference_study(cfg);
      if (cfg.problem.sigma == 0)
        std::cerr << "normality skipped: noise level sigma is 0, the pivots are undefined\n";
      report(harness::write_normality_outputs(cfg, study));
      break;
    }
    case ExperimentKind::coverage: {
      const auto study = harness::run_inference_study(cfg);
      report(harness::write_coverage_outputs(cfg, study));
      break;
    }
    case ExperimentKind::inference: {
      if (cfg.stream_path.empty()) throw harness::ConfigError("infer needs --stream <file>");
      const auto table = harness::replay_stream(cfg, cfg.stream_path);
      const auto path = std::filesystem::path(cfg.out_dir) / "inference.csv";
      table.write(path);
      report({path});
      break;
    }
    case ExperimentKind::record: {
      const std::filesystem::path path = cfg.stream_path.empty()
                                             ? std::filesystem::path(cfg.out_dir) / "stream.bin"
                                             : std::filesystem::path(cfg.stream_path);
      harness::record_stream(cfg, path);
      report({path});
      break;
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  using harness::ExperimentKind;
  CLI::App app{"Streaming low-rank Tucker regression: estimation and online inference"};
  app.require_subcommand(1);

  Overrides o;
  struct Sub {
    const char* name;
    const char* help;
    ExperimentKind kind;
    bool stream;
  };
  const Sub subs[] = {
      {"estimate", "relative-error curves over Monte Carlo replicates", ExperimentKind::estimation, false},
      {"normality", "distribution of the standardized pivots", ExperimentKind::normality, false},
      {"coverage", "empirical coverage over a grid of times", ExperimentKind::coverage, false},
      {"infer", "online inference over a recorded stream", ExperimentKind::inference, true},
      {"record", "record a synthetic stream to a file", ExperimentKind::record, true},
  };
  std::vector<std::pair<CLI::App*, ExperimentKind>> commands;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, o, s.stream);
    commands.emplace_back(cmd, s.kind);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    for (const auto& [cmd, kind] : commands)
      if (cmd->parsed()) return run(kind, o);
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const tensorstream::FormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const tensorstream::DimensionError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const tensorstream::PreconditionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const tensorstream::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
