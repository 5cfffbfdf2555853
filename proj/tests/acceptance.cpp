// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "harness/experiments.hpp"
#include "oracles.hpp"
#include "tensorstream/statistics.hpp"

using namespace tensorstream;
using namespace testutil;
using harness::ExperimentConfig;
using harness::ExperimentKind;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s [%d] %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// --------------------------------------------------------------- criterion 1

void gradients() {
  Stopwatch sw;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed)
    worst = std::max(worst, oracles::gradient_check(1000 + seed).worst());
  const double secs = sw.seconds();
  report(1, "gradient oracle suite", worst <= 1e-4 && secs < 10,
         fmt("50 instances, worst relative error %.2e (<= 1e-4), %.2f s (< 10 s)", worst, secs));
}

// --------------------------------------------------------------- criterion 2

struct AlgebraErrors {
  double roundtrip = 0, tucker = 0, kron = 0, idempotent = 0, gauge = 0, sin_theta = 0;
  double worst() const {
    return std::max({roundtrip, tucker, kron, idempotent, gauge, sin_theta});
  }
};

void algebra_instance(std::uint64_t seed, AlgebraErrors& e) {
  NormalSource rng(seed);
  Dims3 dims, ranks;
  for (std::size_t k = 0; k < 3; ++k) dims[k] = 2 + static_cast<Index>(rng.uniform01() * 5);
  for (std::size_t k = 0; k < 3; ++k) ranks[k] = std::min<Index>(dims[k], 2);

  const auto t = random_tensor(rng, dims);
  for (int k = 0; k < 3; ++k)
    e.roundtrip = std::max(e.roundtrip, rel_diff(refold(matricize(t, k), k, dims), t));

  const auto s = random_state(rng, dims, ranks);
  const auto recon = reconstruct(s);
  for (int k = 0; k < 3; ++k) {
    const auto k0 = static_cast<std::size_t>(k);
    const auto k1 = static_cast<std::size_t>(cyclic_mode(k, 1));
    const auto k2 = static_cast<std::size_t>(cyclic_mode(k, 2));
    const MatXd rhs =
        s.factors[k0] * matricize(s.core, k) * kronecker(s.factors[k1], s.factors[k2]).transpose();
    e.tucker = std::max(e.tucker, rel_diff(matricize(recon, k), rhs));
  }

  const MatXd a = random_mat(rng, 3, 2), b = random_mat(rng, 2, 4);
  const MatXd c = random_mat(rng, 2, 3), d = random_mat(rng, 4, 2);
  e.kron = std::max(e.kron,
                    rel_diff(MatXd(kronecker(a, b) * kronecker(c, d)), kronecker(a * c, b * d)));

  Factors<double> u;
  for (std::size_t k = 0; k < 3; ++k) u[k] = random_orthonormal(rng, dims[k], ranks[k]);
  auto project = [&](const Tensor3d& x) {
    auto y = x;
    for (int k = 0; k < 3; ++k) {
      const auto& uk = u[static_cast<std::size_t>(k)];
      y = mode_product(y, MatXd(uk * uk.transpose()), k);
    }
    return y;
  };
  const auto once = project(t);
  e.idempotent = std::max(e.idempotent, rel_diff(project(once), once));

  TuckerStated g = s;
  for (int k = 0; k < 3; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const MatXd r = random_mat(rng, ranks[ku], ranks[ku]) +
                    3 * MatXd::Identity(ranks[ku], ranks[ku]);
    g.factors[ku] = s.factors[ku] * r;
    g.core = mode_product(g.core, MatXd(r.inverse()), k);
  }
  e.gauge = std::max(e.gauge, rel_diff(reconstruct(g), recon));

  for (std::size_t k = 0; k < 3; ++k) {
    const MatXd v = random_orthonormal(rng, dims[k], ranks[k]);
    const double lhs = std::pow(sin_theta(u[k], v).frobenius, 2);
    const double rhs = 0.5 * (oracles::proj(u[k]) - oracles::proj(v)).squaredNorm();
    e.sin_theta = std::max(e.sin_theta, std::abs(lhs - rhs) / std::max(1.0, rhs));
  }
}

void algebra() {
  Stopwatch sw;
  AlgebraErrors e;
  for (std::uint64_t seed = 0; seed < 50; ++seed) algebra_instance(2000 + seed, e);
  const double secs = sw.seconds();
  report(2, "algebra identity suite", e.worst() <= 1e-10 && secs < 5,
         fmt("round-trip %.1e, tucker %.1e, kronecker %.1e, idempotence %.1e, gauge %.1e, "
             "sin-theta %.1e (<= 1e-10), %.2f s (< 5 s)",
             e.roundtrip, e.tucker, e.kron, e.idempotent, e.gauge, e.sin_theta, secs));
}

// --------------------------------------------------------------- criterion 3

void telescoping() {
  double t_hat = 0, sigma2 = 0, s2 = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = oracles::telescope_check(500 + seed);
    t_hat = std::max(t_hat, c.t_hat);
    sigma2 = std::max(sigma2, c.sigma2);
    s2 = std::max(s2, c.s2);
  }
  report(3, "telescoping oracles", std::max({t_hat, sigma2, s2}) <= 1e-12,
         fmt("20 runs of 10 steps, worst relative error T-hat %.1e, sigma2 %.1e, S2 %.1e "
             "(<= 1e-12)",
             t_hat, sigma2, s2));
}

// --------------------------------------------------------------- criterion 4

void convergence() {
  Stopwatch sw;
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::estimation;
  cfg.problem.dims = {10, 10, 10};
  cfg.problem.ranks = {1, 1, 1};
  cfg.problem.lambda = 2;
  cfg.problem.sigma = 1;
  cfg.problem.seed = 0;
  cfg.eta0 = 5e-4;
  cfg.alpha = 0.501;
  cfg.horizon = 20000;
  cfg.replicates = 20;
  cfg.validate();

  const auto study = harness::run_estimation_study(cfg);
  const auto curve = harness::summarize_curves(study, false);
  const long t_star = cfg.schedule().t_star;

  std::vector<double> lx, ly;
  double at_1000 = NAN, at_end = NAN;
  long diverged = 0;
  for (const auto& r : study.replicates) diverged += r.diverged_at.has_value();
  for (std::size_t i = 0; i < study.steps.size(); ++i) {
    const long t = study.steps[i];
    if (t == 1000) at_1000 = curve.median[i];
    if (t == cfg.horizon) at_end = curve.median[i];
    if (t >= t_star && std::isfinite(curve.median[i]) && curve.median[i] > 0) {
      lx.push_back(std::log(static_cast<double>(t)));
      ly.push_back(std::log(curve.median[i]));
    }
  }
  const double slope = fitted_slope(lx, ly);
  const double target = -cfg.alpha / 2;
  const double ratio = at_end / at_1000;
  const double secs = sw.seconds();
  const bool pass = std::abs(slope - target) <= 0.15 && ratio <= 1.0 / 3 && diverged == 0 &&
                    secs < 300;
  report(4, "convergence rate", pass,
         fmt("slope over [%ld, %ld] = %.3f (target %.3f +- 0.15); median error %.4f at t=1000, "
             "%.4f at T, ratio %.3f (<= 0.333); %ld diverged; %.1f s (< 300 s)",
             t_star, cfg.horizon, slope, target, at_1000, at_end, ratio, diverged, secs));
}

// ---------------------------------------------------------- criteria 5 to 7

void inference() {
  Stopwatch sw;
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::coverage;
  cfg.problem.dims = {30, 30, 30};
  cfg.problem.ranks = {1, 1, 1};
  cfg.problem.lambda = 2;
  cfg.problem.sigma = 1;
  cfg.problem.seed = 0;
  cfg.eta0 = 5e-4;
  cfg.alpha = 0.501;
  cfg.horizon = 10000;
  cfg.replicates = 500;
  cfg.warmup = 1000;
  cfg.grid = {2000, 5000, 10000};
  cfg.form = harness::parse_form("entry:0,0,0");
  cfg.significance = 0.05;
  cfg.validate();

  const auto study = harness::run_inference_study(cfg);
  const double secs = sw.seconds();
  const std::size_t last = study.grid.size() - 1;
  long usable = 0;
  for (const auto& r : study.replicates) usable += r.status == "ok";

  const auto lin = harness::summarize_pivot(harness::linear_pivots(study, last));
  report(5, "linear-form normality", std::abs(lin.mean) < 0.15 && lin.sd >= 0.85 &&
                                         lin.sd <= 1.15 && lin.ks < 0.08 && secs < 1800,
         fmt("t=%ld, n=%ld of 500: mean %.3f (|.| < 0.15), sd %.3f ([0.85, 1.15]), KS %.3f "
             "(< 0.08); study %.0f s (< 1800 s)",
             study.grid[last], lin.n, lin.mean, lin.sd, lin.ks, secs));

  const auto cov = harness::summarize_coverage(study);
  const double lin_cov = cov[last].linear;
  // Factor-coverage trend, judged on five disjoint blocks of 100 replicates.
  int transitions = 0, monotone = 0;
  std::string blocks;
  for (std::size_t b = 0; b < 5; ++b) {
    std::vector<double> rate(study.grid.size(), 0.0);
    std::vector<long> n(study.grid.size(), 0);
    for (std::size_t i = b * 100; i < (b + 1) * 100 && i < study.replicates.size(); ++i) {
      const auto& r = study.replicates[i];
      if (r.status != "ok") continue;
      for (std::size_t g = 0; g < r.points.size(); ++g) {
        if (!r.points[g].factor_pivot) continue;
        rate[g] += r.points[g].factor_covered;
        ++n[g];
      }
    }
    blocks += " [";
    for (std::size_t g = 0; g < rate.size(); ++g) {
      rate[g] = n[g] ? rate[g] / static_cast<double>(n[g]) : NAN;
      blocks += fmt(g ? " %.2f" : "%.2f", rate[g]);
    }
    blocks += "]";
    for (std::size_t g = 1; g < rate.size(); ++g) {
      ++transitions;
      monotone += rate[g] >= rate[g - 1];
    }
  }
  std::string overall;
  for (const auto& row : cov) overall += fmt(" %ld:%.3f", row.t, row.factor);
  report(6, "coverage",
         lin_cov >= 0.92 && lin_cov <= 0.97 && 2 * monotone > transitions,
         fmt("linear coverage at t=%ld %.3f ([0.92, 0.97]); factor coverage non-decreasing in "
             "%d of %d block transitions; blocks%s; overall%s",
             study.grid[last], lin_cov, monotone, transitions, blocks.c_str(), overall.c_str()));

  const auto fac = harness::summarize_pivot(harness::factor_pivots(study, last));
  report(7, "factor pivot", std::abs(fac.mean) < 0.2 && fac.sd >= 0.8 && fac.sd <= 1.2,
         fmt("t=%ld, n=%ld: mean %.3f (|.| < 0.2), sd %.3f ([0.8, 1.2]), KS %.3f; "
             "%ld usable replicates",
             study.grid[last], fac.n, fac.mean, fac.sd, fac.ks, usable));
}

// --------------------------------------------------------------- criterion 8

struct ThreadsEnv {
  explicit ThreadsEnv(const char* v) { setenv("TENSORSTREAM_THREADS", v, 1); }
  ~ThreadsEnv() { unsetenv("TENSORSTREAM_THREADS"); }
};

/// Every CSV produced by all commands, concatenated in a fixed order.
std::string run_all(const std::filesystem::path& dir) {
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::string all;
  auto collect = [&](const std::vector<std::filesystem::path>& files) {
    for (const auto& f : files)
      if (f.extension() == ".csv") all += f.filename().string() + "\n" + slurp(f);
  };

  ExperimentConfig cfg;
  cfg.problem.dims = {6, 6, 6};
  cfg.problem.seed = 11;
  cfg.replicates = 6;
  cfg.horizon = 400;
  cfg.out_dir = dir.string();

  cfg.kind = ExperimentKind::estimation;
  cfg.vanilla = true;
  collect(harness::write_estimation_outputs(cfg, harness::run_estimation_study(cfg)));
  cfg.vanilla = false;

  cfg.warmup = 100;
  cfg.grid = {200, 400};
  cfg.kind = ExperimentKind::normality;
  collect(harness::write_normality_outputs(cfg, harness::run_inference_study(cfg)));
  cfg.kind = ExperimentKind::coverage;
  collect(harness::write_coverage_outputs(cfg, harness::run_inference_study(cfg)));

  cfg.kind = ExperimentKind::record;
  cfg.known_truth = true;
  const auto stream = dir / "stream.bin";
  harness::record_stream(cfg, stream);
  cfg.kind = ExperimentKind::inference;
  all += "inference.csv\n" + harness::replay_stream(cfg, stream).text();
  return all;
}

void determinism() {
  const auto base = std::filesystem::temp_directory_path() / "tensorstream_acceptance";
  std::string first, again, parallel;
  {
    ThreadsEnv env("1");
    first = run_all(base / "a");
    again = run_all(base / "b");
  }
  {
    ThreadsEnv env("4");
    parallel = run_all(base / "c");
  }
  std::filesystem::remove_all(base);
  report(8, "determinism", !first.empty() && first == again && first == parallel,
         fmt("%zu bytes of CSV from estimate, normality, coverage and infer; rerun %s, "
             "4 threads vs 1 %s",
             first.size(), first == again ? "identical" : "differs",
             first == parallel ? "identical" : "differs"));
}

template <typename F>
void guarded(int id, const std::string& name, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  guarded(1, "gradient oracle suite", gradients);
  guarded(2, "algebra identity suite", algebra);
  guarded(3, "telescoping oracles", telescoping);
  guarded(8, "determinism", determinism);
  guarded(4, "convergence rate", convergence);
  guarded(5, "inference study", inference);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
