#pragma once

// Factorized SGD for low-rank tensor regression.
//
// Each step moves the core and factors along the stochastic gradient of
// f = 1/2 (<X, [[G; U_0, U_1, U_2]]> - y)^2, with each factor additionally
// pulled toward orthonormality by 1/2 U_k (U_k^T U_k - I). All four updates
// read the previous iterate.

#include <cmath>
#include <optional>
#include <vector>

#include "tensorstream/sample.hpp"
#include "tensorstream/tucker.hpp"

namespace tensorstream {

/// eta_t = eta0 * max(t, t_star)^(-alpha).
struct StepSchedule {
  double eta0 = 5e-4;
  double alpha = 0.501;
  long t_star = 1;

  /// Plateau length t_star = round(df^(1/alpha)), at least 1.
  static StepSchedule for_df(double eta0, double alpha, Index df) {
    if (!(eta0 > 0)) throw PreconditionError("eta0 must be positive");
    if (!(alpha > 0.5 && alpha < 1)) throw PreconditionError("alpha must lie in (0.5, 1)");
    const double ts = std::round(std::pow(static_cast<double>(df), 1.0 / alpha));
    return {eta0, alpha, std::max(1L, static_cast<long>(ts))};
  }
};

inline double eta(const StepSchedule& s, long t) {
  if (t < 1) throw PreconditionError("eta: step index must be >= 1");
  return s.eta0 * std::pow(static_cast<double>(std::max(t, s.t_star)), -s.alpha);
}

template <typename Scalar>
struct LossGradients {
  Factors<Scalar> factors;  ///< d f / d U_k, without the balancing term
  Tensor3<Scalar> core;     ///< d f / d G
  Scalar residual{};        ///< <X, T> - y
};

template <typename Scalar>
void check_sample_dims(const TuckerState<Scalar>& s, const StreamSample<Scalar>& sample) {
  if (sample.x.dims() != s.dims())
    throw DimensionError("sample dims " + dims_string(sample.x.dims()) +
                         " differ from model dims " + dims_string(s.dims()));
}

template <typename Scalar>
LossGradients<Scalar> loss_gradients(const TuckerState<Scalar>& s,
                                     const StreamSample<Scalar>& sample) {
  s.validate();
  check_sample_dims(s, sample);
  // part[k] = X x_{k+1} U_{k+1}^T x_{k+2} U_{k+2}^T, so that
  // M_k(part[k]) = M_k(X) (U_{k+1} (x) U_{k+2}).
  const auto part = partial_contractions(sample.x, s.factors);
  auto projected = contract(part[0], s.factors[0], 0);

  LossGradients<Scalar> g;
  g.residual = inner(projected, s.core) - sample.y;
  for (int k = 0; k < 3; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    g.factors[ku] =
        g.residual * (matricize(part[ku], k) * matricize(s.core, k).transpose());
  }
  g.core = std::move(projected) * g.residual;
  return g;
}

template <typename Scalar>
struct SgdUpdate {
  TuckerState<Scalar> state;
  Scalar residual{};  ///< residual of the pre-step iterate on this sample
};

/// One step of factorized SGD; also reports the pre-step residual.
template <typename Scalar>
SgdUpdate<Scalar> sgd_update(const TuckerState<Scalar>& s,
                             const StreamSample<Scalar>& sample, double eta_t) {
  if (!(eta_t >= 0)) throw PreconditionError("sgd_step: eta must be non-negative");
  const auto g = loss_gradients(s, sample);
  const auto step = static_cast<Scalar>(eta_t);

  SgdUpdate<Scalar> out{s, g.residual};
  for (std::size_t k = 0; k < 3; ++k) {
    out.state.factors[k] -=
        step * (g.factors[k] + Scalar(0.25) * regularizer_gradient(s.factors[k]));
    if (!out.state.factors[k].allFinite())
      throw DivergenceError("sgd_step: non-finite factor update", -1);
  }
  out.state.core -= step * g.core;
  if (!out.state.core.allFinite())
    throw DivergenceError("sgd_step: non-finite core update", -1);
  return out;
}

template <typename Scalar>
TuckerState<Scalar> sgd_step(const TuckerState<Scalar>& s,
                             const StreamSample<Scalar>& sample, double eta_t) {
  return sgd_update(s, sample, eta_t).state;
}

/// Unconstrained baseline: T - eta (<X, T> - y) X.
template <typename Scalar>
Tensor3<Scalar> vanilla_sgd_step(const Tensor3<Scalar>& t,
                                 const StreamSample<Scalar>& sample, double eta_t) {
  const Scalar residual = inner(t, sample.x) - sample.y;
  Tensor3<Scalar> out = t;
  out.vec() -= static_cast<Scalar>(eta_t) * residual * sample.x.vec();
  return out;
}

template <typename Scalar>
struct Trajectory {
  std::vector<long> steps;                  ///< 0, k, 2k, ...
  std::vector<TuckerState<Scalar>> states;  ///< snapshot at each entry of steps
  TuckerState<Scalar> final_state;
  long steps_run = 0;
};

/// Runs sgd_step for t = 1..horizon, or until the source runs dry.
/// Divergence is rethrown with the offending step index.
template <typename Scalar, typename Source>
  requires SampleSource<Source, Scalar>
Trajectory<Scalar> run_estimation(TuckerState<Scalar> init, Source& source,
                                  const StepSchedule& sched, long horizon,
                                  long cadence = 1) {
  if (horizon < 0) throw PreconditionError("run_estimation: negative horizon");
  if (cadence < 1) throw PreconditionError("run_estimation: cadence must be >= 1");
  Trajectory<Scalar> traj;
  traj.steps.push_back(0);
  traj.states.push_back(init);
  auto state = std::move(init);
  for (long t = 1; t <= horizon; ++t) {
    auto sample = source.next();
    if (!sample) break;
    try {
      state = sgd_step(state, *sample, eta(sched, t));
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.what(), t);
    }
    traj.steps_run = t;
    if (t % cadence == 0) {
      traj.steps.push_back(t);
      traj.states.push_back(state);
    }
  }
  traj.final_state = std::move(state);
  return traj;
}

}  // namespace tensorstream
