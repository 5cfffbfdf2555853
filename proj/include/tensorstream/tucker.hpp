#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tensorstream/sample.hpp"
#include "tensorstream/tensor3.hpp"

namespace tensorstream {

template <typename Scalar>
using Factors = std::array<Mat<Scalar>, 3>;

/// Core tensor plus per-mode factor matrices, T = G x_0 U_0 x_1 U_1 x_2 U_2.
template <typename Scalar>
struct TuckerState {
  Tensor3<Scalar> core;
  Factors<Scalar> factors;

  Dims3 ranks() const { return core.dims(); }
  Dims3 dims() const {
    return {factors[0].rows(), factors[1].rows(), factors[2].rows()};
  }

  void validate() const {
    for (int k = 0; k < 3; ++k) {
      const auto& u = factors[static_cast<std::size_t>(k)];
      if (u.cols() != core.dim(k))
        throw DimensionError("factor " + std::to_string(k) + " has " +
                             std::to_string(u.cols()) + " columns, core rank is " +
                             std::to_string(core.dim(k)));
      if (u.cols() > u.rows())
        throw DimensionError("factor " + std::to_string(k) + " rank exceeds dimension");
    }
  }
};

using TuckerStated = TuckerState<double>;

/// Parameter count r1 r2 r3 + sum_k p_k r_k.
inline Index degrees_of_freedom(const Dims3& dims, const Dims3& ranks) {
  return ranks[0] * ranks[1] * ranks[2] + dims[0] * ranks[0] +
         dims[1] * ranks[1] + dims[2] * ranks[2];
}

template <typename Scalar>
Tensor3<Scalar> reconstruct(const TuckerState<Scalar>& s) {
  s.validate();
  auto t = mode_product(s.core, s.factors[0], 0);
  t = mode_product(t, s.factors[1], 1);
  return mode_product(t, s.factors[2], 2);
}

/// For each k, t contracted against U_{k+1} and U_{k+2}:
///   out[k] = t x_{k+1} U_{k+1}^T x_{k+2} U_{k+2}^T.
/// Only two passes over the full tensor are made.
template <typename Scalar>
std::array<Tensor3<Scalar>, 3> partial_contractions(const Tensor3<Scalar>& t,
                                                    const Factors<Scalar>& u) {
  const auto y2 = contract(t, u[2], 2);
  const auto y0 = contract(t, u[0], 0);
  return {contract(y2, u[1], 1), contract(y2, u[0], 0), contract(y0, u[1], 1)};
}

/// t x_0 U_0^T x_1 U_1^T x_2 U_2^T.
template <typename Scalar>
Tensor3<Scalar> full_contraction(const Tensor3<Scalar>& t, const Factors<Scalar>& u) {
  auto c = contract(t, u[2], 2);
  c = contract(c, u[1], 1);
  return contract(c, u[0], 0);
}

template <typename Scalar>
struct SinTheta {
  Scalar spectral{};
  Scalar frobenius{};
};

template <typename Derived>
bool has_orthonormal_columns(const Eigen::MatrixBase<Derived>& u, double tol = 1e-8) {
  using Scalar = typename Derived::Scalar;
  const Mat<Scalar> gram = u.transpose() * u;
  return (gram - Mat<Scalar>::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff() <= tol;
}

/// Principal-angle distance between the column spans of two orthonormal bases.
template <typename Scalar>
SinTheta<Scalar> sin_theta(const Mat<Scalar>& u, const Mat<Scalar>& v,
                           double orthonormality_tol = 1e-8) {
  if (u.rows() != v.rows() || u.cols() != v.cols())
    throw DimensionError("sin_theta: bases must have equal shape");
  if (!has_orthonormal_columns(u, orthonormality_tol) ||
      !has_orthonormal_columns(v, orthonormality_tol))
    throw PreconditionError("sin_theta: inputs must have orthonormal columns");
  // (I - U U^T) V has singular values sin(theta_i); forming it directly keeps
  // small angles accurate where 1 - cos^2 would cancel.
  const Mat<Scalar> resid = v - u * (u.transpose() * v);
  Eigen::JacobiSVD<Mat<Scalar>> svd(resid);
  SinTheta<Scalar> out;
  out.spectral = std::min(Scalar(1), svd.singularValues().maxCoeff());
  out.frobenius = resid.norm();
  return out;
}

/// h(U_0, U_1, U_2) = 1/2 sum_k ||U_k^T U_k - I||_F^2.
template <typename Scalar>
Scalar orthonormality_defect(const TuckerState<Scalar>& s) {
  Scalar h = 0;
  for (const auto& u : s.factors)
    h += (u.transpose() * u - Mat<Scalar>::Identity(u.cols(), u.cols())).squaredNorm();
  return h / 2;
}

/// Gradient of h with respect to one factor: 2 U (U^T U - I).
template <typename Derived>
Mat<typename Derived::Scalar> regularizer_gradient(const Eigen::MatrixBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  return Scalar(2) * u * (u.transpose() * u - Mat<Scalar>::Identity(u.cols(), u.cols()));
}

struct HooiOptions {
  int max_sweeps = 50;
  double tolerance = 1e-8;  ///< relative Frobenius change of the reconstruction
};

template <typename Scalar>
struct HooiResult {
  TuckerState<Scalar> state;
  /// ||T - reconstruction||_F after the HOSVD pass and after every sweep.
  std::vector<Scalar> residuals;
  int sweeps = 0;
};

inline void check_ranks(const Dims3& dims, const Dims3& ranks) {
  for (int k = 0; k < 3; ++k) {
    const auto r = ranks[static_cast<std::size_t>(k)];
    const auto r1 = ranks[static_cast<std::size_t>(cyclic_mode(k, 1))];
    const auto r2 = ranks[static_cast<std::size_t>(cyclic_mode(k, 2))];
    if (r < 1 || r > dims[static_cast<std::size_t>(k)] || r > r1 * r2)
      throw PreconditionError("rank " + dims_string(ranks) +
                              " infeasible for dims " + dims_string(dims));
  }
}

/// HOSVD followed by higher-order orthogonal iteration.
template <typename Scalar>
HooiResult<Scalar> hooi(const Tensor3<Scalar>& t, const Dims3& ranks,
                        const HooiOptions& opts = {}) {
  check_ranks(t.dims(), ranks);
  if (!t.allFinite()) throw NumericalError("hooi: non-finite input");

  HooiResult<Scalar> res;
  Factors<Scalar> u;
  for (int k = 0; k < 3; ++k)
    u[static_cast<std::size_t>(k)] =
        truncated_svd(matricize(t, k), ranks[static_cast<std::size_t>(k)]).u;

  auto make_state = [&](const Factors<Scalar>& f) {
    return TuckerState<Scalar>{full_contraction(t, f), f};
  };
  auto state = make_state(u);
  auto recon = reconstruct(state);
  res.residuals.push_back((t - recon).norm());

  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    for (int k = 0; k < 3; ++k) {
      const int k1 = cyclic_mode(k, 1), k2 = cyclic_mode(k, 2);
      auto y = contract(t, u[static_cast<std::size_t>(k1)], k1);
      y = contract(y, u[static_cast<std::size_t>(k2)], k2);
      u[static_cast<std::size_t>(k)] =
          truncated_svd(matricize(y, k), ranks[static_cast<std::size_t>(k)]).u;
    }
    state = make_state(u);
    auto next = reconstruct(state);
    const Scalar change = (next - recon).norm();
    const Scalar scale = std::max(recon.norm(), next.norm());
    recon = std::move(next);
    res.residuals.push_back((t - recon).norm());
    res.sweeps = sweep + 1;
    if (scale == Scalar(0) || change <= opts.tolerance * scale) break;
  }
  res.state = std::move(state);
  return res;
}

/// Running sum of y_i X_i for the spectral initializer.
template <typename Scalar>
class InitAccumulator {
 public:
  explicit InitAccumulator(const Dims3& dims) : sum_(dims) {}

  void add(const StreamSample<Scalar>& s) {
    if (s.x.dims() != sum_.dims())
      throw DimensionError("init sample dims " + dims_string(s.x.dims()) +
                           " differ from " + dims_string(sum_.dims()));
    sum_.vec() += s.y * s.x.vec();
    ++count_;
  }

  long count() const { return count_; }

  /// (1 / n0) sum_i y_i X_i.
  Tensor3<Scalar> mean() const {
    if (count_ == 0) throw PreconditionError("init: no samples accumulated");
    return sum_ / static_cast<Scalar>(count_);
  }

 private:
  Tensor3<Scalar> sum_;
  long count_ = 0;
};

/// Two-step spectral initializer: average y_i X_i, then HOOI.
template <typename Scalar>
TuckerState<Scalar> hooi_init(std::span<const StreamSample<Scalar>> samples,
                              const Dims3& ranks, const HooiOptions& opts = {}) {
  if (samples.empty()) throw PreconditionError("hooi_init: need at least one sample");
  InitAccumulator<Scalar> acc(samples.front().x.dims());
  for (const auto& s : samples) acc.add(s);
  return hooi(acc.mean(), ranks, opts).state;
}

/// n0 = ceil(30 sqrt(lambda / sigma) df). Zero noise falls back to 30 df.
inline long default_init_samples(double lambda, double sigma, Index df) {
  const double ratio = sigma > 0 ? std::sqrt(lambda / sigma) : 1.0;
  return static_cast<long>(std::ceil(30.0 * ratio * static_cast<double>(df)));
}

}  // namespace tensorstream
