#pragma once

// Online inference on top of the factorized SGD iterate.
//
// The debiased average
//   T_hat(t) = ((t-1)/t) T_hat(t-1) + (1/t) [T(t-1) - (<T(t-1), X_t> - y_t) X_t]
// is projected onto a rank-(r1, r2, r3) subspace whose bases are refreshed
// by one power-iteration step per arrival. Linear forms <T*, M> get a
// normal-theory confidence interval from running plug-in estimates of the
// noise variance sigma^2 and the CLT factor S^2; the projected bases get a
// sin-theta confidence region.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "tensorstream/sgd.hpp"
#include "tensorstream/statistics.hpp"
#include "tensorstream/tucker.hpp"

namespace tensorstream {

/// Fixed tensor M defining m* = <T*, M>. Entry and contrast forms keep a
/// sparse description so contractions against it stay cheap.
template <typename Scalar>
struct LinearForm {
  struct Entry {
    std::array<Index, 3> index;
    Scalar weight;
  };

  Tensor3<Scalar> m;
  std::vector<Entry> entries;  ///< empty for a dense form

  static LinearForm dense(Tensor3<Scalar> m) {
    if (!(m.vec().array() != Scalar(0)).any())
      throw PreconditionError("linear form needs a nonzero entry");
    return {std::move(m), {}};
  }

  static LinearForm sparse(const Dims3& dims, std::vector<Entry> entries) {
    LinearForm f{Tensor3<Scalar>(dims), {}};
    for (const auto& e : entries) {
      for (std::size_t k = 0; k < 3; ++k)
        if (e.index[k] < 0 || e.index[k] >= dims[k])
          throw DimensionError("linear form index out of range for " + dims_string(dims));
      f.m(e.index[0], e.index[1], e.index[2]) += e.weight;
    }
    if (!(f.m.vec().array() != Scalar(0)).any())
      throw PreconditionError("linear form needs a nonzero entry");
    f.entries = std::move(entries);
    return f;
  }

  /// e_i (x) e_j (x) e_k.
  static LinearForm entry(const Dims3& dims, std::array<Index, 3> at) {
    return sparse(dims, {{at, Scalar(1)}});
  }

  /// e_a - e_b.
  static LinearForm contrast(const Dims3& dims, std::array<Index, 3> a,
                             std::array<Index, 3> b) {
    return sparse(dims, {{a, Scalar(1)}, {b, Scalar(-1)}});
  }

  bool is_sparse() const { return !entries.empty(); }
  const Dims3& dims() const { return m.dims(); }
};

using LinearFormd = LinearForm<double>;

/// Sparse-aware counterpart of partial_contractions(Tensor3, Factors).
template <typename Scalar>
std::array<Tensor3<Scalar>, 3> partial_contractions(const LinearForm<Scalar>& form,
                                                    const Factors<Scalar>& u) {
  if (!form.is_sparse()) return partial_contractions(form.m, u);
  std::array<Tensor3<Scalar>, 3> out;
  for (int k = 0; k < 3; ++k) {
    const auto k0 = static_cast<std::size_t>(k);
    const auto k1 = static_cast<std::size_t>(cyclic_mode(k, 1));
    const auto k2 = static_cast<std::size_t>(cyclic_mode(k, 2));
    Dims3 d;
    d[k0] = form.dims()[k0];
    d[k1] = u[k1].cols();
    d[k2] = u[k2].cols();
    Tensor3<Scalar> t(d);
    for (const auto& e : form.entries) {
      std::array<Index, 3> idx;
      idx[k0] = e.index[k0];
      for (Index a = 0; a < d[k1]; ++a) {
        idx[k1] = a;
        const Scalar wa = e.weight * u[k1](e.index[k1], a);
        for (Index b = 0; b < d[k2]; ++b) {
          idx[k2] = b;
          t(idx[0], idx[1], idx[2]) += wa * u[k2](e.index[k2], b);
        }
      }
    }
    out[k0] = std::move(t);
  }
  return out;
}

template <typename Scalar>
Tensor3<Scalar> full_contraction(const LinearForm<Scalar>& form, const Factors<Scalar>& u) {
  if (!form.is_sparse()) return full_contraction(form.m, u);
  return contract(partial_contractions(form, u)[0], u[0], 0);
}

template <typename Scalar>
struct InferenceState {
  long t = 0;
  Tensor3<Scalar> t_hat;             ///< debiased running average
  Factors<Scalar> proj_factors;      ///< current projected bases
  Factors<Scalar> prev_factors;      ///< bases of the previous step
  std::array<Vec<Scalar>, 3> lambda_hat;
  Scalar sigma2_hat = 0;
  Scalar s2_hat = 0;

  static InferenceState start(const Dims3& dims) {
    InferenceState s;
    s.t_hat = Tensor3<Scalar>(dims);
    return s;
  }

  /// Seeds the projected bases from (orthonormalized) SGD factors.
  void seed_bases(const Factors<Scalar>& factors) {
    for (std::size_t k = 0; k < 3; ++k) {
      proj_factors[k] = orthonormalize(factors[k]);
      prev_factors[k] = proj_factors[k];
      lambda_hat[k] = Vec<Scalar>::Zero(factors[k].cols());
    }
  }
};

using InferenceStated = InferenceState<double>;

/// Advances the debiased average with a precomputed dense T(t-1) and its
/// residual <T(t-1), X_t> - y_t.
template <typename Scalar>
InferenceState<Scalar> debias_accumulate(InferenceState<Scalar> state,
                                         const Tensor3<Scalar>& prev_dense,
                                         Scalar residual, const Tensor3<Scalar>& x) {
  if (state.t < 0) throw PreconditionError("debias_update: negative step counter");
  if (state.t_hat.empty()) state.t_hat = Tensor3<Scalar>(prev_dense.dims());
  if (prev_dense.dims() != state.t_hat.dims() || x.dims() != state.t_hat.dims())
    throw DimensionError("debias_update: dims mismatch");
  const auto t = static_cast<Scalar>(state.t + 1);
  state.t_hat.vec() = (state.t_hat.vec() * (t - 1) + prev_dense.vec() - residual * x.vec()) / t;
  ++state.t;
  return state;
}

template <typename Scalar>
InferenceState<Scalar> debias_update(InferenceState<Scalar> state,
                                     const TuckerState<Scalar>& sgd_prev,
                                     const StreamSample<Scalar>& sample) {
  check_sample_dims(sgd_prev, sample);
  const auto prev = reconstruct(sgd_prev);
  const Scalar residual = inner(prev, sample.x) - sample.y;
  return debias_accumulate(std::move(state), prev, residual, sample.x);
}

/// One simultaneous power-iteration refresh of the projected bases:
/// U_k, Lambda_k = SVD_rk(M_k(T_hat x_{k+1} U_{k+1}^T x_{k+2} U_{k+2}^T)).
template <typename Scalar>
InferenceState<Scalar> project_factors(InferenceState<Scalar> state) {
  for (const auto& u : state.proj_factors)
    if (u.size() == 0) throw PreconditionError("project_factors: bases not seeded");
  const auto part = partial_contractions(state.t_hat, state.proj_factors);
  Factors<Scalar> next;
  for (int k = 0; k < 3; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    auto svd = truncated_svd(matricize(part[ku], k), state.proj_factors[ku].cols());
    next[ku] = std::move(svd.u);
    state.lambda_hat[ku] = std::move(svd.values);
  }
  state.prev_factors = std::move(state.proj_factors);
  state.proj_factors = std::move(next);
  return state;
}

/// <T_hat x_0 P_0 x_1 P_1 x_2 P_2, M> with P_k the projector onto the current bases.
template <typename Scalar>
Scalar linear_form_estimate(const InferenceState<Scalar>& state, const LinearForm<Scalar>& form) {
  if (form.dims() != state.t_hat.dims())
    throw DimensionError("linear_form_estimate: form dims " + dims_string(form.dims()) +
                         " differ from " + dims_string(state.t_hat.dims()));
  return inner(full_contraction(state.t_hat, state.proj_factors),
               full_contraction(form, state.proj_factors));
}

/// sum_k <X x_k P_k^perp x_{k+1} P_{k+1} x_{k+2} P_{k+2}, M>^2 for the given bases.
template <typename Scalar>
Scalar projection_variance_increment(const Tensor3<Scalar>& x, const Factors<Scalar>& bases,
                                     const LinearForm<Scalar>& form) {
  if (form.dims() != x.dims()) throw DimensionError("variance_update: form dims mismatch");
  const auto ax = partial_contractions(x, bases);
  const auto am = partial_contractions(form, bases);
  Scalar total = 0;
  for (int k = 0; k < 3; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const Scalar full = inner(ax[ku], am[ku]);
    const Scalar inside = inner(contract(ax[ku], bases[ku], k), contract(am[ku], bases[ku], k));
    total += (full - inside) * (full - inside);
  }
  return total;
}

/// Folds one step's increments into the running averages at step state.t.
template <typename Scalar>
InferenceState<Scalar> apply_variance_increments(InferenceState<Scalar> state,
                                                 Scalar residual_sq, Scalar projection_sq) {
  if (state.t < 1) throw PreconditionError("variance_update: step counter must be >= 1");
  const auto t = static_cast<Scalar>(state.t);
  state.sigma2_hat = (state.sigma2_hat * (t - 1) + residual_sq) / t;
  state.s2_hat = (state.s2_hat * (t - 1) + projection_sq) / t;
  return state;
}

/// sigma^2 uses the current SGD iterate T(t); S^2 uses the previous step's bases.
template <typename Scalar>
InferenceState<Scalar> variance_update(InferenceState<Scalar> state,
                                       const TuckerState<Scalar>& sgd_curr,
                                       const StreamSample<Scalar>& sample,
                                       const LinearForm<Scalar>& form) {
  check_sample_dims(sgd_curr, sample);
  const Scalar pred = inner(full_contraction(sample.x, sgd_curr.factors), sgd_curr.core);
  const Scalar r = sample.y - pred;
  const Scalar s = projection_variance_increment(sample.x, state.prev_factors, form);
  return apply_variance_increments(std::move(state), r * r, s);
}

struct ConfidenceInterval {
  double center = 0;
  double half_width = 0;
  double level = 0.95;  ///< nominal coverage 1 - alpha

  double lower() const { return center - half_width; }
  double upper() const { return center + half_width; }
  bool contains(double v) const { return v >= lower() && v <= upper(); }
  bool degenerate() const { return half_width == 0; }
};

inline void check_alpha(double alpha) {
  if (!(alpha > 0 && alpha < 1))
    throw PreconditionError("significance level must lie in (0, 1)");
}

/// m_hat +/- z_{alpha/2} sigma_hat S_hat / sqrt(t).
template <typename Scalar>
ConfidenceInterval ci_linear_form(const InferenceState<Scalar>& state, double m_hat, double alpha) {
  check_alpha(alpha);
  if (state.t < 1) throw PreconditionError("ci_linear_form: step counter must be >= 1");
  const double sigma = std::sqrt(static_cast<double>(state.sigma2_hat));
  const double s = std::sqrt(static_cast<double>(state.s2_hat));
  if (!std::isfinite(sigma) || !std::isfinite(s))
    throw NumericalError("ci_linear_form: non-finite plug-in variance");
  const double z = upper_normal_quantile(alpha / 2);
  return {m_hat, z * sigma * s / std::sqrt(static_cast<double>(state.t)), 1 - alpha};
}

/// Confidence region {U : ||sin Theta(U_hat_k, U)||_F^2 <= center + z_alpha spread}.
template <typename Scalar>
struct FactorRegionSpec {
  int mode = 0;
  double center_stat = 0;  ///< p_k sigma^2 ||Lambda^-1||_F^2 / t
  double spread = 0;       ///< sqrt(2 p_k) sigma^2 ||Lambda^-2||_F / t
  double alpha = 0.05;
  double z = 0;            ///< z_alpha
  Mat<Scalar> basis;       ///< U_hat_k

  double bound() const { return center_stat + z * spread; }

  double sin_theta_sq(const Mat<Scalar>& candidate) const {
    const double f = static_cast<double>(sin_theta(basis, candidate).frobenius);
    return f * f;
  }

  bool membership(const Mat<Scalar>& candidate) const {
    return sin_theta_sq(candidate) <= bound();
  }

  /// (||sin Theta||_F^2 - center) / spread; NaN when the spread vanishes.
  double standardized_stat(const Mat<Scalar>& truth) const {
    if (spread == 0) return std::numeric_limits<double>::quiet_NaN();
    return (sin_theta_sq(truth) - center_stat) / spread;
  }
};

template <typename Scalar>
FactorRegionSpec<Scalar> factor_region(const InferenceState<Scalar>& state, int mode,
                                       double alpha) {
  check_mode(mode);
  check_alpha(alpha);
  if (state.t < 1) throw PreconditionError("factor_region: step counter must be >= 1");
  const auto& lam = state.lambda_hat[static_cast<std::size_t>(mode)];
  if (lam.size() == 0) throw PreconditionError("factor_region: no singular values yet");
  const double lmax = static_cast<double>(lam.maxCoeff());
  const double lmin = static_cast<double>(lam.minCoeff());
  if (!(lmax > 0) || lmin < 1e-12 * lmax)
    throw NumericalError("factor_region: zero singular value, inverse undefined");

  const auto inv2 = lam.array().template cast<double>().square().inverse();
  const double p = static_cast<double>(state.t_hat.dim(mode));
  const double t = static_cast<double>(state.t);
  const double s2 = static_cast<double>(state.sigma2_hat);

  FactorRegionSpec<Scalar> r;
  r.mode = mode;
  r.alpha = alpha;
  r.z = upper_normal_quantile(alpha);
  r.center_stat = p * s2 * inv2.sum() / t;
  r.spread = std::sqrt(2 * p) * s2 * std::sqrt(inv2.square().sum()) / t;
  r.basis = state.proj_factors[static_cast<std::size_t>(mode)];
  return r;
}

struct InferenceOptions {
  long horizon = 0;     ///< last SGD step
  long warmup = 1;      ///< t0: SGD-only steps before inference records
  double alpha = 0.05;  ///< significance level for intervals and regions
};

/// Default warm-up t0 = max(t_star, 200).
inline long default_warmup(const StepSchedule& s) { return std::max(s.t_star, 200L); }

template <typename Scalar>
struct InferenceRecord {
  long t = 0;
  double m_hat = 0;
  ConfidenceInterval ci;
  double sigma2_hat = 0;
  double s2_hat = 0;
  std::array<Vec<Scalar>, 3> lambda_hat;
  /// Empty when a singular value estimate is zero.
  std::array<std::optional<FactorRegionSpec<Scalar>>, 3> regions;
};

/// Online estimation plus inference. Steps 1..t0 run SGD and seed the
/// running averages; each later step performs, in order: SGD step, debias
/// update with the pre-step iterate, basis refresh, linear-form estimate,
/// plug-in variance update, interval and region outputs.
///
/// The debiased average accumulates from t = 1 so that it, sigma^2 and S^2
/// all average over the same t arrivals.
template <typename Scalar, typename Source>
  requires SampleSource<Source, Scalar>
class OnlineInference {
 public:
  using Observer = std::function<void(const InferenceRecord<Scalar>&,
                                      const InferenceState<Scalar>&,
                                      const TuckerState<Scalar>&)>;

  OnlineInference(TuckerState<Scalar> init, const StepSchedule& sched,
                  LinearForm<Scalar> form, const InferenceOptions& opts)
      : sgd_(std::move(init)), sched_(sched), form_(std::move(form)), opts_(opts) {
    sgd_.validate();
    if (opts_.warmup < 1) throw PreconditionError("inference warm-up t0 must be >= 1");
    if (opts_.horizon < 0) throw PreconditionError("inference horizon must be >= 0");
    check_alpha(opts_.alpha);
    if (form_.dims() != sgd_.dims())
      throw DimensionError("linear form dims differ from model dims");
    dense_ = reconstruct(sgd_);
    state_ = InferenceState<Scalar>::start(sgd_.dims());
  }

  /// Runs until the horizon or until the source is exhausted.
  std::vector<InferenceRecord<Scalar>> run(Source& source, const Observer& observe = {}) {
    std::vector<InferenceRecord<Scalar>> records;
    while (t_ < opts_.horizon) {
      auto sample = source.next();
      if (!sample) break;
      auto rec = step(*sample);
      if (rec) {
        if (observe) observe(*rec, state_, sgd_);
        records.push_back(std::move(*rec));
      }
    }
    return records;
  }

  /// Consumes one arrival; returns a record once past the warm-up.
  std::optional<InferenceRecord<Scalar>> step(const StreamSample<Scalar>& sample) {
    check_sample_dims(sgd_, sample);
    const long t = t_ + 1;
    SgdUpdate<Scalar> up;
    try {
      up = sgd_update(sgd_, sample, eta(sched_, t));
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.what(), t);
    }

    state_ = debias_accumulate(std::move(state_), dense_, up.residual, sample.x);

    std::optional<InferenceRecord<Scalar>> rec;
    Scalar projection_sq;
    double m_hat = 0;
    if (t <= opts_.warmup) {
      Factors<Scalar> bases;
      for (std::size_t k = 0; k < 3; ++k) bases[k] = orthonormalize(sgd_.factors[k]);
      projection_sq = projection_variance_increment(sample.x, bases, form_);
    } else {
      state_ = project_factors(std::move(state_));
      m_hat = static_cast<double>(linear_form_estimate(state_, form_));
      projection_sq = projection_variance_increment(sample.x, state_.prev_factors, form_);
    }

    sgd_ = std::move(up.state);
    dense_ = reconstruct(sgd_);
    const Scalar r = sample.y - inner(dense_, sample.x);
    state_ = apply_variance_increments(std::move(state_), r * r, projection_sq);
    t_ = t;

    if (t == opts_.warmup) state_.seed_bases(sgd_.factors);
    if (t > opts_.warmup) {
      InferenceRecord<Scalar> out;
      out.t = t;
      out.m_hat = m_hat;
      out.ci = ci_linear_form(state_, m_hat, opts_.alpha);
      out.sigma2_hat = static_cast<double>(state_.sigma2_hat);
      out.s2_hat = static_cast<double>(state_.s2_hat);
      out.lambda_hat = state_.lambda_hat;
      for (int k = 0; k < 3; ++k) {
        try {
          out.regions[static_cast<std::size_t>(k)] = factor_region(state_, k, opts_.alpha);
        } catch (const NumericalError&) {
        }
      }
      rec = std::move(out);
    }
    return rec;
  }

  long steps() const { return t_; }
  const InferenceState<Scalar>& state() const { return state_; }
  const TuckerState<Scalar>& sgd_state() const { return sgd_; }
  const LinearForm<Scalar>& form() const { return form_; }

 private:
  TuckerState<Scalar> sgd_;
  Tensor3<Scalar> dense_;  ///< reconstruct(sgd_)
  StepSchedule sched_;
  LinearForm<Scalar> form_;
  InferenceOptions opts_;
  InferenceState<Scalar> state_;
  long t_ = 0;
};

/// Convenience wrapper around OnlineInference::run.
template <typename Scalar, typename Source>
  requires SampleSource<Source, Scalar>
std::vector<InferenceRecord<Scalar>> run_inference(
    TuckerState<Scalar> init, Source& source, const StepSchedule& sched,
    LinearForm<Scalar> form, const InferenceOptions& opts,
    const typename OnlineInference<Scalar, Source>::Observer& observe = {}) {
  OnlineInference<Scalar, Source> engine(std::move(init), sched, std::move(form), opts);
  return engine.run(source, observe);
}

}  // namespace tensorstream
