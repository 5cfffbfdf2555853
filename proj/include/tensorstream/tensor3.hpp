#pragma once

// Dense order-3 tensors and the multilinear kernels built on them.
//
// Storage is row-major: entry (i, j, k) of a p1 x p2 x p3 tensor lives at
// flat offset (i * p2 + j) * p3 + k. Modes are 0-based in code (0, 1, 2).
//
// Matricization follows the cyclic convention: the mode-k unfolding has
// mode k along the rows and modes (k+1, k+2) mod 3 along the columns, with
// mode k+2 varying fastest:
//
//   M_0(T)(i, j * p3 + k) = T(i, j, k)
//   M_1(T)(j, k * p1 + i) = T(i, j, k)
//   M_2(T)(k, i * p2 + j) = T(i, j, k)
//
// With this layout the Tucker unfolding identity reads
//
//   M_k(G x_0 U_0 x_1 U_1 x_2 U_2) = U_k M_k(G) (U_{k+1} (x) U_{k+2})^T.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>

#include "tensorstream/errors.hpp"

namespace tensorstream {

using Index = Eigen::Index;
using Dims3 = std::array<Index, 3>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowMajorMat =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatXd = Mat<double>;
using VecXd = Vec<double>;

/// Mode that follows `mode` by `step` positions in the cyclic order.
constexpr int cyclic_mode(int mode, int step) { return (mode + step) % 3; }

inline std::string dims_string(const Dims3& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" +
         std::to_string(d[2]);
}

inline void check_mode(int mode) {
  if (mode < 0 || mode > 2)
    throw DimensionError("mode must be 0, 1 or 2, got " + std::to_string(mode));
}

template <typename Scalar_>
class Tensor3 {
 public:
  using Scalar = Scalar_;

  Tensor3() : dims_{0, 0, 0} {}

  Tensor3(Index p1, Index p2, Index p3) : Tensor3(Dims3{p1, p2, p3}) {}

  explicit Tensor3(const Dims3& dims) : dims_(dims) {
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
      throw DimensionError("tensor dims must be positive, got " +
                           dims_string(dims));
    data_ = Vec<Scalar>::Zero(dims[0] * dims[1] * dims[2]);
  }

  /// Wraps an existing flat row-major buffer.
  Tensor3(const Dims3& dims, Vec<Scalar> data) : dims_(dims), data_(std::move(data)) {
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
      throw DimensionError("tensor dims must be positive, got " +
                           dims_string(dims));
    if (data_.size() != dims[0] * dims[1] * dims[2])
      throw DimensionError("data length does not match dims " +
                           dims_string(dims));
  }

  static Tensor3 Zero(const Dims3& dims) { return Tensor3(dims); }

  /// Tensor with a single unit entry at (i, j, k).
  static Tensor3 Unit(const Dims3& dims, Index i, Index j, Index k) {
    Tensor3 t(dims);
    t(i, j, k) = Scalar(1);
    return t;
  }

  /// Outer product a (x) b (x) c.
  template <typename A, typename B, typename C>
  static Tensor3 Outer(const Eigen::MatrixBase<A>& a,
                       const Eigen::MatrixBase<B>& b,
                       const Eigen::MatrixBase<C>& c) {
    Tensor3 t(a.size(), b.size(), c.size());
    for (Index i = 0; i < a.size(); ++i)
      for (Index j = 0; j < b.size(); ++j)
        for (Index k = 0; k < c.size(); ++k)
          t(i, j, k) = a(i) * b(j) * c(k);
    return t;
  }

  const Dims3& dims() const noexcept { return dims_; }
  Index dim(int mode) const { return dims_[static_cast<std::size_t>(mode)]; }
  Index size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.size() == 0; }

  Scalar& operator()(Index i, Index j, Index k) {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  const Scalar& operator()(Index i, Index j, Index k) const {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }

  /// Flat row-major storage.
  Vec<Scalar>& vec() noexcept { return data_; }
  const Vec<Scalar>& vec() const noexcept { return data_; }
  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }

  Scalar norm() const { return data_.norm(); }
  Scalar squaredNorm() const { return data_.squaredNorm(); }
  bool allFinite() const { return data_.allFinite(); }

  void setZero() { data_.setZero(); }

  Tensor3& operator+=(const Tensor3& o) {
    require_same(o, "+=");
    data_ += o.data_;
    return *this;
  }
  Tensor3& operator-=(const Tensor3& o) {
    require_same(o, "-=");
    data_ -= o.data_;
    return *this;
  }
  Tensor3& operator*=(Scalar s) {
    data_ *= s;
    return *this;
  }
  Tensor3& operator/=(Scalar s) {
    data_ /= s;
    return *this;
  }

  friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
  friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
  friend Tensor3 operator*(Tensor3 a, Scalar s) { return a *= s; }
  friend Tensor3 operator*(Scalar s, Tensor3 a) { return a *= s; }
  friend Tensor3 operator/(Tensor3 a, Scalar s) { return a /= s; }

  friend bool operator==(const Tensor3& a, const Tensor3& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

  template <typename NewScalar>
  Tensor3<NewScalar> cast() const {
    return Tensor3<NewScalar>(dims_, data_.template cast<NewScalar>());
  }

 private:
  void require_same(const Tensor3& o, const char* op) const {
    if (o.dims_ != dims_)
      throw DimensionError(std::string("tensor ") + op + ": " +
                           dims_string(dims_) + " vs " + dims_string(o.dims_));
  }

  Dims3 dims_;
  Vec<Scalar> data_;
};

using Tensor3d = Tensor3<double>;

/// Mode-k unfolding, shape p_k x (p_{k+1} p_{k+2}).
template <typename Scalar>
Mat<Scalar> matricize(const Tensor3<Scalar>& t, int mode) {
  check_mode(mode);
  const auto [p1, p2, p3] = t.dims();
  using ConstRowMap = Eigen::Map<const RowMajorMat<Scalar>>;
  switch (mode) {
    case 0:
      return ConstRowMap(t.data(), p1, p2 * p3);
    case 2:
      return ConstRowMap(t.data(), p1 * p2, p3).transpose();
    default: {
      Mat<Scalar> m(p2, p3 * p1);
      for (Index i = 0; i < p1; ++i)
        for (Index j = 0; j < p2; ++j)
          for (Index k = 0; k < p3; ++k) m(j, k * p1 + i) = t(i, j, k);
      return m;
    }
  }
}

/// Inverse of matricize for the same mode.
template <typename Derived>
Tensor3<typename Derived::Scalar> refold(const Eigen::MatrixBase<Derived>& m,
                                         int mode, const Dims3& dims) {
  using Scalar = typename Derived::Scalar;
  check_mode(mode);
  const Index rows = dims[static_cast<std::size_t>(mode)];
  const Index cols = dims[static_cast<std::size_t>(cyclic_mode(mode, 1))] *
                     dims[static_cast<std::size_t>(cyclic_mode(mode, 2))];
  if (m.rows() != rows || m.cols() != cols)
    throw DimensionError("refold: matrix is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", mode " +
                         std::to_string(mode) + " of " + dims_string(dims) +
                         " needs " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  Tensor3<Scalar> t(dims);
  const auto [p1, p2, p3] = dims;
  using RowMap = Eigen::Map<RowMajorMat<Scalar>>;
  switch (mode) {
    case 0:
      RowMap(t.data(), p1, p2 * p3) = m;
      break;
    case 2:
      RowMap(t.data(), p1 * p2, p3) = m.transpose();
      break;
    default:
      for (Index i = 0; i < p1; ++i)
        for (Index j = 0; j < p2; ++j)
          for (Index k = 0; k < p3; ++k) t(i, j, k) = m(j, k * p1 + i);
  }
  return t;
}

/// Mode-k product t x_k m: replaces p_k by m.rows().
template <typename Scalar, typename Derived>
Tensor3<Scalar> mode_product(const Tensor3<Scalar>& t,
                             const Eigen::MatrixBase<Derived>& m, int mode) {
  check_mode(mode);
  if (m.cols() != t.dim(mode))
    throw DimensionError("mode_product: matrix has " + std::to_string(m.cols()) +
                         " columns, mode " + std::to_string(mode) + " of " +
                         dims_string(t.dims()) + " has size " +
                         std::to_string(t.dim(mode)));
  const auto [p1, p2, p3] = t.dims();
  const Index rows = m.rows();
  Dims3 out_dims = t.dims();
  out_dims[static_cast<std::size_t>(mode)] = rows;
  Tensor3<Scalar> out(out_dims);

  using RowMap = Eigen::Map<RowMajorMat<Scalar>>;
  using ConstRowMap = Eigen::Map<const RowMajorMat<Scalar>>;
  switch (mode) {
    case 0:
      RowMap(out.data(), rows, p2 * p3).noalias() =
          m * ConstRowMap(t.data(), p1, p2 * p3);
      break;
    case 1:
      for (Index i = 0; i < p1; ++i)
        RowMap(out.data() + i * rows * p3, rows, p3).noalias() =
            m * ConstRowMap(t.data() + i * p2 * p3, p2, p3);
      break;
    default:
      RowMap(out.data(), p1 * p2, rows).noalias() =
          ConstRowMap(t.data(), p1 * p2, p3) * m.transpose();
  }
  return out;
}

/// t x_k u^T: contracts mode k against the columns of u.
template <typename Scalar, typename Derived>
Tensor3<Scalar> contract(const Tensor3<Scalar>& t,
                         const Eigen::MatrixBase<Derived>& u, int mode) {
  return mode_product(t, u.transpose(), mode);
}

/// Block Kronecker product: row (ia * b.rows() + ib), column (ja * b.cols() + jb).
template <typename A, typename B>
Mat<typename A::Scalar> kronecker(const Eigen::MatrixBase<A>& a,
                                  const Eigen::MatrixBase<B>& b) {
  const Index br = b.rows(), bc = b.cols();
  Mat<typename A::Scalar> out(a.rows() * br, a.cols() * bc);
  for (Index ja = 0; ja < a.cols(); ++ja)
    for (Index ia = 0; ia < a.rows(); ++ia)
      out.block(ia * br, ja * bc, br, bc) = a(ia, ja) * b;
  return out;
}

template <typename Scalar>
Scalar inner(const Tensor3<Scalar>& a, const Tensor3<Scalar>& b) {
  if (a.dims() != b.dims())
    throw DimensionError("inner: " + dims_string(a.dims()) + " vs " +
                         dims_string(b.dims()));
  return a.vec().dot(b.vec());
}

template <typename Scalar>
struct SvdResult {
  Mat<Scalar> u;       ///< p x r, orthonormal columns
  Vec<Scalar> values;  ///< r singular values, non-increasing
  Mat<Scalar> v;       ///< q x r
};

/// Top-r singular triplets of m.
template <typename Derived>
SvdResult<typename Derived::Scalar> truncated_svd(const Eigen::MatrixBase<Derived>& m,
                                                  Index rank) {
  using Scalar = typename Derived::Scalar;
  if (rank < 0 || rank > std::min(m.rows(), m.cols()))
    throw DimensionError("truncated_svd: rank " + std::to_string(rank) +
                         " exceeds min dimension of " + std::to_string(m.rows()) +
                         "x" + std::to_string(m.cols()));
  if (!m.allFinite()) throw NumericalError("truncated_svd: non-finite input");
  Eigen::BDCSVD<Mat<Scalar>> svd(m.eval(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericalError("truncated_svd: SVD did not converge");
  return {svd.matrixU().leftCols(rank), svd.singularValues().head(rank),
          svd.matrixV().leftCols(rank)};
}

/// Orthonormal basis of the column span of u (thin Q of a Householder QR).
template <typename Derived>
Mat<typename Derived::Scalar> orthonormalize(const Eigen::MatrixBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  Eigen::HouseholderQR<Mat<Scalar>> qr(u.eval());
  return qr.householderQ() * Mat<Scalar>::Identity(u.rows(), u.cols());
}

}  // namespace tensorstream
