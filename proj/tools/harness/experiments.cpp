#include "harness/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "harness/parallel.hpp"
#include "harness/svg.hpp"
#include "tensorstream/statistics.hpp"
#include "tensorstream/stream_file.hpp"

namespace harness {

namespace ts = tensorstream;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Type-7 quantile of sorted data.
double quantile_sorted(const std::vector<double>& s, double q) {
  if (s.empty()) return kNaN;
  const double h = (static_cast<double>(s.size()) - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

ts::HooiOptions hooi_options(const ExperimentConfig& cfg) {
  return {cfg.hooi_sweeps, cfg.hooi_tol};
}

std::filesystem::path out_path(const ExperimentConfig& cfg, const std::string& name) {
  return std::filesystem::path(cfg.out_dir) / name;
}

void write_svg(const std::filesystem::path& path, const LineChart& chart) {
  write_file_atomic(path, chart.render());
}

}  // namespace

ReplicateSetup prepare_replicate(const ExperimentConfig& cfg, int replicate) {
  auto truth = ts::make_truth(cfg.problem, static_cast<std::uint64_t>(replicate));
  ts::SampleStream stream(cfg.problem, truth.tensor, static_cast<std::uint64_t>(replicate));
  const long n0 = cfg.n0();
  ts::InitAccumulator<double> acc(cfg.problem.dims);
  ts::StreamSampled s;
  for (long i = 0; i < n0; ++i) {
    stream.fill(s);
    acc.add(s);
  }
  auto init = ts::hooi(acc.mean(), cfg.problem.ranks, hooi_options(cfg)).state;
  const double err = (ts::reconstruct(init) - truth.tensor).norm() / truth.tensor.norm();
  return {std::move(truth), std::move(stream), std::move(init), n0, err};
}

// ---------------------------------------------------------------- estimation

EstimationStudy run_estimation_study(const ExperimentConfig& cfg) {
  cfg.validate();
  EstimationStudy study;
  for (long t = cfg.cadence; t <= cfg.horizon; t += cfg.cadence) study.steps.push_back(t);
  const auto sched = cfg.schedule();
  const std::size_t snaps = study.steps.size();

  study.replicates = run_replicates<EstimationReplicate>(
      cfg.replicates, worker_threads(cfg.replicates), [&](int rep) {
        auto setup = prepare_replicate(cfg, rep);
        EstimationReplicate out;
        out.replicate = rep;
        out.init_rel_error = setup.init_rel_error;
        out.rel_error.assign(snaps, kNaN);
        if (cfg.vanilla) out.vanilla_rel_error.assign(snaps, kNaN);

        const double scale = setup.truth.tensor.norm();
        auto state = setup.init;
        auto vanilla = ts::reconstruct(setup.init);
        bool alive = true;
        ts::StreamSampled s;
        std::size_t snap = 0;
        for (long t = 1; t <= cfg.horizon; ++t) {
          setup.stream.fill(s);
          const double eta = ts::eta(sched, t);
          if (alive) {
            try {
              state = ts::sgd_step(state, s, eta);
            } catch (const ts::DivergenceError& e) {
              alive = false;
              out.diverged_at = t;
              out.message = e.what();
            }
          }
          if (cfg.vanilla && !out.vanilla_diverged_at) {
            vanilla = ts::vanilla_sgd_step(vanilla, s, eta);
            if (!vanilla.allFinite()) out.vanilla_diverged_at = t;
          }
          if (t % cfg.cadence == 0) {
            if (alive) {
              const double e = (ts::reconstruct(state) - setup.truth.tensor).norm() / scale;
              if (std::isfinite(e)) {
                out.rel_error[snap] = e;
              } else {
                alive = false;
                out.diverged_at = t;
                out.message = "relative error overflowed";
              }
            }
            if (cfg.vanilla && !out.vanilla_diverged_at)
              out.vanilla_rel_error[snap] = (vanilla - setup.truth.tensor).norm() / scale;
            ++snap;
          }
          if (!alive && (!cfg.vanilla || out.vanilla_diverged_at)) break;
        }
        return out;
      });
  return study;
}

CurveSummary summarize_curves(const EstimationStudy& study, bool vanilla) {
  CurveSummary c;
  std::vector<double> col;
  for (std::size_t i = 0; i < study.steps.size(); ++i) {
    col.clear();
    for (const auto& r : study.replicates) {
      if (vanilla) {
        if (r.vanilla_diverged_at || r.vanilla_rel_error.empty()) continue;
        col.push_back(r.vanilla_rel_error[i]);
      } else {
        if (r.diverged_at) continue;
        col.push_back(r.rel_error[i]);
      }
    }
    std::sort(col.begin(), col.end());
    c.n.push_back(static_cast<long>(col.size()));
    c.median.push_back(quantile_sorted(col, 0.5));
    c.q25.push_back(quantile_sorted(col, 0.25));
    c.q75.push_back(quantile_sorted(col, 0.75));
    if (col.empty()) {
      c.mean.push_back(kNaN);
      c.se.push_back(kNaN);
    } else {
      c.mean.push_back(ts::sample_mean(col));
      c.se.push_back(col.size() > 1 ? ts::sample_sd(col) / std::sqrt(static_cast<double>(col.size()))
                                    : kNaN);
    }
  }
  return c;
}

std::vector<std::filesystem::path> write_estimation_outputs(const ExperimentConfig& cfg,
                                                            const EstimationStudy& study) {
  const auto hash = cfg.hash_hex();
  std::vector<std::filesystem::path> files;

  std::vector<std::string> rep_cols{"replicate", "t", "rel_error"};
  if (cfg.vanilla) rep_cols.push_back("vanilla_rel_error");
  CsvTable reps("estimate-replicates", hash, rep_cols);
  for (const auto& r : study.replicates)
    for (std::size_t i = 0; i < study.steps.size(); ++i) {
      reps.cell(r.replicate).cell(study.steps[i]).cell(r.rel_error[i]);
      if (cfg.vanilla) reps.cell(r.vanilla_rel_error[i]);
      reps.end_row();
    }
  files.push_back(out_path(cfg, "estimate_replicates.csv"));
  reps.write(files.back());

  const auto ours = summarize_curves(study, false);
  std::vector<std::string> cols{"t", "median", "q25", "q75", "mean", "se", "n"};
  if (cfg.vanilla)
    for (const char* c : {"vanilla_median", "vanilla_q25", "vanilla_q75", "vanilla_mean",
                          "vanilla_se", "vanilla_n"})
      cols.push_back(c);
  CsvTable summary("estimate", hash, cols);
  std::optional<CurveSummary> van;
  if (cfg.vanilla) van = summarize_curves(study, true);
  for (std::size_t i = 0; i < study.steps.size(); ++i) {
    summary.cell(study.steps[i]).cell(ours.median[i]).cell(ours.q25[i]).cell(ours.q75[i]);
    summary.cell(ours.mean[i]).cell(ours.se[i]).cell(ours.n[i]);
    if (van) {
      summary.cell(van->median[i]).cell(van->q25[i]).cell(van->q75[i]);
      summary.cell(van->mean[i]).cell(van->se[i]).cell(van->n[i]);
    }
    summary.end_row();
  }
  files.push_back(out_path(cfg, "estimate.csv"));
  summary.write(files.back());

  CsvTable status("estimate-status", hash,
                  {"replicate", "status", "diverged_at", "init_rel_error", "vanilla_status",
                   "vanilla_diverged_at", "message"});
  for (const auto& r : study.replicates) {
    status.cell(r.replicate).cell(std::string(r.diverged_at ? "diverged" : "ok"));
    if (r.diverged_at) status.cell(*r.diverged_at);
    else status.empty_cell();
    status.cell(r.init_rel_error);
    if (!cfg.vanilla) status.cell(std::string("off")).empty_cell();
    else if (r.vanilla_diverged_at) status.cell(std::string("diverged")).cell(*r.vanilla_diverged_at);
    else status.cell(std::string("ok")).empty_cell();
    status.cell(r.message).end_row();
  }
  files.push_back(out_path(cfg, "estimate_status.csv"));
  status.write(files.back());

  LineChart chart;
  chart.title = "Relative estimation error";
  chart.x_label = "t";
  chart.y_label = "||T(t) - T*||_F / ||T*||_F";
  chart.log_x = cfg.log_scale;
  chart.log_y = cfg.log_scale;
  std::vector<double> xs(study.steps.begin(), study.steps.end());
  chart.series.push_back({"median", xs, ours.median, "#1f77b4", false});
  chart.series.push_back({"quartiles", xs, ours.q25, "#9ecae1", true});
  chart.series.push_back({"", xs, ours.q75, "#9ecae1", true});
  chart.series.push_back({"mean", xs, ours.mean, "#08519c", false});
  if (van) chart.series.push_back({"vanilla median", xs, van->median, "#d62728", false});
  files.push_back(out_path(cfg, "estimate.svg"));
  write_svg(files.back(), chart);
  return files;
}

// ----------------------------------------------------------------- inference

InferenceStudy run_inference_study(const ExperimentConfig& cfg) {
  cfg.validate();
  InferenceStudy study;
  study.grid = cfg.effective_grid();
  study.warmup = cfg.effective_warmup();
  const long horizon = study.grid.back();
  const auto sched = cfg.schedule();
  const auto form = cfg.form.build(cfg.problem.dims);
  const double z_two = ts::upper_normal_quantile(cfg.significance / 2);
  const ts::InferenceOptions opts{horizon, study.warmup, cfg.significance};

  study.replicates = run_replicates<InferenceReplicate>(
      cfg.replicates, worker_threads(cfg.replicates), [&](int rep) {
        InferenceReplicate out;
        out.replicate = rep;
        if (cfg.problem.sigma == 0) {
          out.status = "skipped";
          out.reason = "noise level sigma is 0, the pivots are undefined";
          return out;
        }
        auto setup = prepare_replicate(cfg, rep);
        const double m_star = ts::inner(setup.truth.tensor, form.m);
        const auto& u_star = setup.truth.state.factors[0];
        ts::OnlineInference<double, ts::SampleStream> engine(setup.init, sched, form, opts);

        ts::StreamSampled s;
        std::size_t g = 0;
        try {
          for (long t = 1; t <= horizon; ++t) {
            setup.stream.fill(s);
            auto rec = engine.step(s);
            if (!rec || rec->t != study.grid[g]) continue;
            InferencePoint p;
            p.t = rec->t;
            p.m_hat = rec->m_hat;
            p.m_star = m_star;
            p.ci_lo = rec->ci.lower();
            p.ci_hi = rec->ci.upper();
            p.sigma_hat = std::sqrt(rec->sigma2_hat);
            p.s_hat = std::sqrt(rec->s2_hat);
            const double scale = p.sigma_hat * p.s_hat;
            p.linear_pivot = scale > 0 ? std::sqrt(static_cast<double>(p.t)) *
                                             (p.m_hat - m_star) / scale
                                       : kNaN;
            p.linear_covered = rec->ci.contains(m_star);
            if (const auto& region = rec->regions[0]) {
              p.sin_theta_sq = region->sin_theta_sq(u_star);
              const double piv = region->standardized_stat(u_star);
              if (std::isfinite(piv)) {
                p.factor_pivot = piv;
                p.factor_covered = std::abs(piv) <= z_two;
              }
              p.factor_member = region->membership(u_star);
            }
            out.points.push_back(p);
            if (++g == study.grid.size()) break;
          }
        } catch (const ts::DivergenceError& e) {
          out.status = "diverged";
          out.reason = std::string(e.what()) + " at step " + std::to_string(e.step());
          out.points.clear();
        }
        return out;
      });
  return study;
}

PivotSummary summarize_pivot(const std::vector<double>& values) {
  std::vector<double> v;
  for (double x : values)
    if (std::isfinite(x)) v.push_back(x);
  PivotSummary s;
  s.n = static_cast<long>(v.size());
  if (v.size() < 2) {
    s.mean = s.sd = s.ks = kNaN;
    return s;
  }
  s.mean = ts::sample_mean(v);
  s.sd = ts::sample_sd(v);
  s.ks = ts::ks_distance_normal(v);
  return s;
}

std::vector<double> linear_pivots(const InferenceStudy& study, std::size_t g) {
  std::vector<double> out;
  for (const auto& r : study.replicates)
    if (r.status == "ok" && g < r.points.size()) out.push_back(r.points[g].linear_pivot);
  return out;
}

std::vector<double> factor_pivots(const InferenceStudy& study, std::size_t g) {
  std::vector<double> out;
  for (const auto& r : study.replicates)
    if (r.status == "ok" && g < r.points.size())
      out.push_back(r.points[g].factor_pivot.value_or(kNaN));
  return out;
}

std::vector<CoverageRow> summarize_coverage(const InferenceStudy& study) {
  std::vector<CoverageRow> rows;
  for (std::size_t g = 0; g < study.grid.size(); ++g) {
    CoverageRow row;
    row.t = study.grid[g];
    long lin = 0, fac = 0;
    for (const auto& r : study.replicates) {
      if (r.status != "ok" || g >= r.points.size()) continue;
      const auto& p = r.points[g];
      if (std::isfinite(p.linear_pivot)) {
        ++row.n_linear;
        lin += p.linear_covered;
      }
      if (p.factor_pivot) {
        ++row.n_factor;
        fac += p.factor_covered;
      }
    }
    row.linear = row.n_linear ? static_cast<double>(lin) / static_cast<double>(row.n_linear) : kNaN;
    row.factor = row.n_factor ? static_cast<double>(fac) / static_cast<double>(row.n_factor) : kNaN;
    rows.push_back(row);
  }
  return rows;
}

namespace {

CsvTable inference_replicate_table(const std::string& kind, const ExperimentConfig& cfg,
                                   const InferenceStudy& study) {
  CsvTable t(kind, cfg.hash_hex(),
             {"replicate", "status", "t", "m_hat", "m_star", "ci_lo", "ci_hi", "sigma_hat", "s_hat",
              "linear_pivot", "linear_covered", "sin_theta_sq", "factor_pivot", "factor_covered",
              "factor_member", "reason"});
  for (const auto& r : study.replicates) {
    if (r.points.empty()) {
      t.cell(r.replicate).cell(r.status);
      for (int i = 0; i < 13; ++i) t.empty_cell();
      t.cell(r.reason).end_row();
      continue;
    }
    for (const auto& p : r.points) {
      t.cell(r.replicate).cell(r.status).cell(p.t).cell(p.m_hat).cell(p.m_star);
      t.cell(p.ci_lo).cell(p.ci_hi).cell(p.sigma_hat).cell(p.s_hat);
      t.cell(p.linear_pivot).cell(p.linear_covered);
      t.cell(p.sin_theta_sq).cell(p.factor_pivot);
      if (p.factor_pivot) t.cell(p.factor_covered);
      else t.empty_cell();
      if (p.sin_theta_sq) t.cell(p.factor_member);
      else t.empty_cell();
      t.cell(r.reason).end_row();
    }
  }
  return t;
}

}  // namespace

std::vector<std::filesystem::path> write_normality_outputs(const ExperimentConfig& cfg,
                                                           const InferenceStudy& study) {
  std::vector<std::filesystem::path> files;
  files.push_back(out_path(cfg, "normality_replicates.csv"));
  inference_replicate_table("normality-replicates", cfg, study).write(files.back());

  CsvTable summary("normality", cfg.hash_hex(), {"statistic", "t", "n", "mean", "sd", "ks_distance", "note"});
  const std::size_t g = study.grid.size() - 1;
  std::string note;
  if (cfg.problem.sigma == 0) note = "skipped: noise level sigma is 0, the pivots are undefined";
  const auto lin = summarize_pivot(linear_pivots(study, g));
  const auto fac = summarize_pivot(factor_pivots(study, g));
  summary.cell(std::string("linear_form")).cell(study.grid[g]).cell(lin.n).cell(lin.mean);
  summary.cell(lin.sd).cell(lin.ks).cell(note).end_row();
  summary.cell(std::string("factor_sin_theta_mode1")).cell(study.grid[g]).cell(fac.n).cell(fac.mean);
  summary.cell(fac.sd).cell(fac.ks).cell(note).end_row();
  files.push_back(out_path(cfg, "normality.csv"));
  summary.write(files.back());
  return files;
}

std::vector<std::filesystem::path> write_coverage_outputs(const ExperimentConfig& cfg,
                                                          const InferenceStudy& study) {
  std::vector<std::filesystem::path> files;
  files.push_back(out_path(cfg, "coverage_replicates.csv"));
  inference_replicate_table("coverage-replicates", cfg, study).write(files.back());

  const auto rows = summarize_coverage(study);
  CsvTable table("coverage", cfg.hash_hex(),
                 {"t", "nominal", "linear_coverage", "linear_n", "factor_coverage", "factor_n"});
  std::vector<double> xs, lin, fac, nominal;
  for (const auto& r : rows) {
    table.cell(r.t).cell(1 - cfg.significance).cell(r.linear).cell(r.n_linear);
    table.cell(r.factor).cell(r.n_factor).end_row();
    xs.push_back(static_cast<double>(r.t));
    lin.push_back(r.linear);
    fac.push_back(r.factor);
    nominal.push_back(1 - cfg.significance);
  }
  files.push_back(out_path(cfg, "coverage.csv"));
  table.write(files.back());

  LineChart chart;
  chart.title = "Empirical coverage";
  chart.x_label = "t";
  chart.y_label = "coverage";
  chart.log_x = cfg.log_scale;
  chart.series.push_back({"linear form CI", xs, lin, "", false});
  chart.series.push_back({"factor region (mode 1)", xs, fac, "", false});
  chart.series.push_back({"nominal", xs, nominal, "#555555", true});
  files.push_back(out_path(cfg, "coverage.svg"));
  write_svg(files.back(), chart);
  return files;
}

// ------------------------------------------------------------ stream replay

void record_stream(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  cfg.validate();
  const auto truth = ts::make_truth(cfg.problem, 0);
  ts::SampleStream stream(cfg.problem, truth.tensor, 0);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    ts::StreamFileWriter writer(tmp, cfg.problem.dims);
    ts::StreamSampled s;
    const long total = cfg.n0() + cfg.horizon;
    for (long i = 0; i < total; ++i) {
      stream.fill(s);
      writer.append(s);
    }
    writer.close();
  }
  std::filesystem::rename(tmp, path);
}

CsvTable replay_stream(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  cfg.validate();
  ts::StreamFileReader reader(path);
  if (reader.dims() != cfg.problem.dims)
    throw ts::DimensionError("stream dims " + ts::dims_string(reader.dims()) +
                             " differ from configured dims " + ts::dims_string(cfg.problem.dims));
  const long n0 = cfg.n0();
  if (reader.count() <= static_cast<std::uint64_t>(n0))
    throw ts::PreconditionError("stream holds " + std::to_string(reader.count()) +
                                " samples, initialization alone needs " + std::to_string(n0));

  ts::InitAccumulator<double> acc(cfg.problem.dims);
  for (long i = 0; i < n0; ++i) acc.add(*reader.next());
  auto init = ts::hooi(acc.mean(), cfg.problem.ranks, hooi_options(cfg)).state;

  const long horizon = std::min<long>(cfg.horizon, static_cast<long>(reader.remaining()));
  const long warmup = cfg.effective_warmup();
  if (warmup >= horizon)
    throw ts::PreconditionError("warm-up " + std::to_string(warmup) +
                                " leaves no inference steps in a horizon of " +
                                std::to_string(horizon));

  std::optional<ts::Truth> truth;
  if (cfg.known_truth) truth = ts::make_truth(cfg.problem, 0);

  const auto& ranks = cfg.problem.ranks;
  std::vector<std::string> cols{"t", "m_hat", "ci_lo", "ci_hi", "sigma2_hat", "s2_hat"};
  for (int k = 0; k < 3; ++k)
    for (long j = 0; j < ranks[static_cast<std::size_t>(k)]; ++j)
      cols.push_back("lambda_hat_" + std::to_string(k + 1) + "_" + std::to_string(j + 1));
  for (int k = 0; k < 3; ++k) cols.push_back("sin_theta_sq_" + std::to_string(k + 1));
  for (int k = 0; k < 3; ++k) cols.push_back("member_" + std::to_string(k + 1));
  CsvTable table("infer", cfg.hash_hex(), cols);

  auto form = cfg.form.build(cfg.problem.dims);
  ts::OnlineInference<double, ts::StreamFileReader> engine(
      init, cfg.schedule(), form, {horizon, warmup, cfg.significance});
  engine.run(reader, [&](const ts::InferenceRecord<double>& rec, const ts::InferenceStated&,
                         const TuckerStated&) {
    if (rec.t % cfg.cadence != 0 && rec.t != horizon) return;
    table.cell(rec.t).cell(rec.m_hat).cell(rec.ci.lower()).cell(rec.ci.upper());
    table.cell(rec.sigma2_hat).cell(rec.s2_hat);
    for (std::size_t k = 0; k < 3; ++k)
      for (long j = 0; j < ranks[k]; ++j) table.cell(rec.lambda_hat[k][j]);
    for (std::size_t k = 0; k < 3; ++k) {
      if (truth && rec.regions[k]) table.cell(rec.regions[k]->sin_theta_sq(truth->state.factors[k]));
      else table.empty_cell();
    }
    for (std::size_t k = 0; k < 3; ++k) {
      if (truth && rec.regions[k]) table.cell(rec.regions[k]->membership(truth->state.factors[k]));
      else table.empty_cell();
    }
    table.end_row();
  });
  if (engine.steps() != horizon)
    throw ts::FormatError("stream ended after " + std::to_string(engine.steps()) + " of " +
                          std::to_string(horizon) + " steps");
  table.footer("summary records=" + std::to_string(horizon - warmup) +
               " rows=" + std::to_string(table.rows()) + " n0=" + std::to_string(n0) +
               " warmup=" + std::to_string(warmup) + " final_t=" + std::to_string(horizon));
  return table;
}

}  // namespace harness
