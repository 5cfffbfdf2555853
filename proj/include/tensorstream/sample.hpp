#pragma once

#include <optional>

#include "tensorstream/tensor3.hpp"

namespace tensorstream {

/// One observation (X_t, y_t) of the regression y = <X, T*> + noise.
template <typename Scalar>
struct StreamSample {
  Tensor3<Scalar> x;
  Scalar y{};
};

using StreamSampled = StreamSample<double>;

/// Anything that hands out samples one at a time until exhausted.
template <typename Source, typename Scalar>
concept SampleSource = requires(Source& s) {
  { s.next() } -> std::convertible_to<std::optional<StreamSample<Scalar>>>;
};

}  // namespace tensorstream
