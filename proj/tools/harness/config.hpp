#pragma once

// Experiment configuration: a key = value file plus command-line overrides.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensorstream/inference.hpp"
#include "tensorstream/simulation.hpp"

namespace harness {

using tensorstream::Dims3;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { estimation, normality, coverage, inference, record };

const char* kind_name(ExperimentKind k);

struct FormSpec {
  enum class Kind { entry, contrast } kind = Kind::entry;
  std::array<long, 3> a{0, 0, 0};
  std::array<long, 3> b{0, 0, 0};

  std::string to_string() const;
  tensorstream::LinearFormd build(const Dims3& dims) const;
};

FormSpec parse_form(const std::string& text);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::estimation;
  tensorstream::ProblemSpec problem;
  double eta0 = 5e-4;
  double alpha = 0.501;  ///< step-size decay exponent
  long horizon = 5000;
  int replicates = 100;
  long cadence = 1;
  FormSpec form;
  double significance = 0.05;
  std::optional<long> warmup;
  std::optional<long> init_samples;
  std::vector<long> grid;  ///< empty: horizon/5, horizon/2, horizon
  bool vanilla = false;
  bool log_scale = true;
  bool known_truth = false;
  int hooi_sweeps = 50;
  double hooi_tol = 1e-8;
  std::string out_dir = "out";
  std::string stream_path;

  void validate() const;

  tensorstream::StepSchedule schedule() const;
  long n0() const;
  std::vector<long> effective_grid() const;
  /// Explicit warm-up, else min(max(t_star, 200), max(1, horizon / 10)).
  long effective_warmup() const;

  /// Canonical key = value text of every result-affecting field.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;
};

/// Applies one key = value assignment.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Parses the file grammar: one `key = value` per line, `#` starts a comment.
void apply_config_text(ExperimentConfig& cfg, const std::string& text,
                       const std::string& origin = "<config>");
void apply_config_file(ExperimentConfig& cfg, const std::string& path);

/// Full-size preset for the given experiment kind.
void apply_paper_scale(ExperimentConfig& cfg);

/// Worker count from TENSORSTREAM_THREADS, else the hardware concurrency.
int worker_threads(int replicates);

}  // namespace harness
