#pragma once

// Monte Carlo experiments and stream replay behind the command-line tool.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "harness/config.hpp"
#include "harness/csv.hpp"

namespace harness {

using tensorstream::TuckerStated;

/// Truth, sample stream and HOOI initialization for one replicate.
struct ReplicateSetup {
  tensorstream::Truth truth;
  tensorstream::SampleStream stream;
  TuckerStated init;
  long n0 = 0;
  double init_rel_error = 0;
};

ReplicateSetup prepare_replicate(const ExperimentConfig& cfg, int replicate);

// ---------------------------------------------------------------- estimation

struct EstimationReplicate {
  int replicate = 0;
  double init_rel_error = 0;
  std::vector<double> rel_error;  ///< one per snapshot step; NaN after divergence
  std::optional<long> diverged_at;
  std::string message;
  std::vector<double> vanilla_rel_error;
  std::optional<long> vanilla_diverged_at;
};

struct EstimationStudy {
  std::vector<long> steps;  ///< cadence, 2 cadence, ..., horizon
  std::vector<EstimationReplicate> replicates;
};

EstimationStudy run_estimation_study(const ExperimentConfig& cfg);

/// Per-step aggregate over the replicates that did not diverge.
struct CurveSummary {
  std::vector<double> median, q25, q75, mean, se;
  std::vector<long> n;
};

CurveSummary summarize_curves(const EstimationStudy& study, bool vanilla);

std::vector<std::filesystem::path> write_estimation_outputs(const ExperimentConfig& cfg,
                                                            const EstimationStudy& study);

// ----------------------------------------------------------------- inference

struct InferencePoint {
  long t = 0;
  double m_hat = 0;
  double m_star = 0;
  double ci_lo = 0;
  double ci_hi = 0;
  double sigma_hat = 0;
  double s_hat = 0;
  double linear_pivot = 0;  ///< NaN when sigma_hat * s_hat vanishes
  bool linear_covered = false;
  /// Mode-1 factor statistic; absent when the region is undefined.
  std::optional<double> sin_theta_sq;
  std::optional<double> factor_pivot;
  bool factor_covered = false;  ///< |pivot| <= z_{alpha/2}
  bool factor_member = false;   ///< truth inside the one-sided region
};

struct InferenceReplicate {
  int replicate = 0;
  std::string status = "ok";  ///< ok | skipped | diverged
  std::string reason;
  std::vector<InferencePoint> points;  ///< one per grid time
};

struct InferenceStudy {
  std::vector<long> grid;
  long warmup = 0;
  std::vector<InferenceReplicate> replicates;
};

InferenceStudy run_inference_study(const ExperimentConfig& cfg);

struct PivotSummary {
  long n = 0;
  double mean = 0;
  double sd = 0;
  double ks = 0;
};

/// Finite values only; NaN fields when fewer than two remain.
PivotSummary summarize_pivot(const std::vector<double>& values);

/// Pivots at grid index `g` over the usable replicates.
std::vector<double> linear_pivots(const InferenceStudy& study, std::size_t g);
std::vector<double> factor_pivots(const InferenceStudy& study, std::size_t g);

struct CoverageRow {
  long t = 0;
  double linear = 0;
  double factor = 0;
  long n_linear = 0;
  long n_factor = 0;
};

std::vector<CoverageRow> summarize_coverage(const InferenceStudy& study);

std::vector<std::filesystem::path> write_normality_outputs(const ExperimentConfig& cfg,
                                                           const InferenceStudy& study);
std::vector<std::filesystem::path> write_coverage_outputs(const ExperimentConfig& cfg,
                                                          const InferenceStudy& study);

// ------------------------------------------------------------ stream replay

/// Writes n0 + horizon samples of replicate 0 to `path`.
void record_stream(const ExperimentConfig& cfg, const std::filesystem::path& path);

/// Replays a recorded stream: the first n0 samples feed the HOOI
/// initialization, the rest drive online inference. Returns the CSV table.
CsvTable replay_stream(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace harness
