#pragma once

#include <cmath>

#include "tensorstream/simulation.hpp"
#include "tensorstream/tucker.hpp"

namespace testutil {

using namespace tensorstream;

inline MatXd random_mat(NormalSource& rng, Index rows, Index cols) {
  MatXd m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = rng();
  return m;
}

inline Tensor3d random_tensor(NormalSource& rng, const Dims3& dims) {
  Tensor3d t(dims);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = rng();
  return t;
}

inline MatXd random_orthonormal(NormalSource& rng, Index p, Index r) {
  return orthonormalize(random_mat(rng, p, r));
}

inline TuckerStated random_state(NormalSource& rng, const Dims3& dims, const Dims3& ranks,
                                 bool orthonormal = false) {
  TuckerStated s;
  s.core = random_tensor(rng, ranks);
  for (std::size_t k = 0; k < 3; ++k)
    s.factors[k] = orthonormal ? random_orthonormal(rng, dims[k], ranks[k])
                               : random_mat(rng, dims[k], ranks[k]);
  return s;
}

/// Entry-by-entry definition of T x_mode A.
inline Tensor3d naive_mode_product(const Tensor3d& t, const MatXd& a, int mode) {
  Dims3 d = t.dims();
  d[static_cast<std::size_t>(mode)] = a.rows();
  Tensor3d out(d);
  for (Index i = 0; i < d[0]; ++i)
    for (Index j = 0; j < d[1]; ++j)
      for (Index k = 0; k < d[2]; ++k) {
        double s = 0;
        const Index n = t.dim(mode);
        for (Index q = 0; q < n; ++q) {
          const Index row = mode == 0 ? i : (mode == 1 ? j : k);
          const double tv = mode == 0 ? t(q, j, k) : (mode == 1 ? t(i, q, k) : t(i, j, q));
          s += a(row, q) * tv;
        }
        out(i, j, k) = s;
      }
  return out;
}

/// Sum of squares by direct triple loop.
inline double naive_norm_sq(const Tensor3d& t) {
  double s = 0;
  for (Index i = 0; i < t.dim(0); ++i)
    for (Index j = 0; j < t.dim(1); ++j)
      for (Index k = 0; k < t.dim(2); ++k) s += t(i, j, k) * t(i, j, k);
  return s;
}

inline double rel_diff(const MatXd& a, const MatXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

inline double rel_diff(const Tensor3d& a, const Tensor3d& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

inline MatXd projector(const MatXd& u) { return u * u.transpose(); }

}  // namespace testutil
