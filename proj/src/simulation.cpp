#include "tensorstream/simulation.hpp"

#include <cmath>
#include <string>

namespace tensorstream {

namespace {
constexpr std::uint64_t kTruthPurpose = 0x7472757468ULL;     // "truth"
constexpr std::uint64_t kSamplePurpose = 0x73616d706c65ULL;  // "sample"
}  // namespace

std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t state = seed;
  std::uint64_t h = splitmix64_next(state);
  state = h ^ a;
  h = splitmix64_next(state);
  state = h ^ b;
  return splitmix64_next(state);
}

Xoshiro256pp::Xoshiro256pp(std::uint64_t seed) {
  std::uint64_t state = seed;
  for (auto& w : s_) w = splitmix64_next(state);
}

void ProblemSpec::validate() const {
  check_ranks(dims, ranks);
  if (!(std::isfinite(lambda) && lambda > 0))
    throw PreconditionError("signal level lambda must be positive and finite");
  if (!(std::isfinite(sigma) && sigma >= 0))
    throw PreconditionError("noise level sigma must be non-negative and finite");
}

Truth make_truth(const ProblemSpec& spec, std::uint64_t replicate) {
  spec.validate();
  NormalSource rng(derive_seed(spec.seed, replicate, kTruthPurpose));

  Tensor3d core(spec.ranks);
  for (Index i = 0; i < core.size(); ++i) core.vec()[i] = rng();
  double smallest = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    const auto sv = truncated_svd(matricize(core, k), spec.ranks[static_cast<std::size_t>(k)]);
    smallest = std::min(smallest, sv.values[sv.values.size() - 1]);
  }
  if (!(smallest > 0)) throw NumericalError("make_truth: degenerate core draw");
  core *= spec.lambda / smallest;

  Factors<double> factors;
  for (std::size_t k = 0; k < 3; ++k) {
    MatXd raw(spec.dims[k], spec.ranks[k]);
    for (Index c = 0; c < raw.cols(); ++c)
      for (Index r = 0; r < raw.rows(); ++r) raw(r, c) = rng.uniform01();
    factors[k] = orthonormalize(raw);
  }

  Truth truth{{std::move(core), std::move(factors)}, {}};
  truth.tensor = reconstruct(truth.state);
  return truth;
}

SampleStream::SampleStream(const ProblemSpec& spec, Tensor3d truth, std::uint64_t stream_index)
    : truth_(std::move(truth)),
      sigma_(spec.sigma),
      normal_(derive_seed(spec.seed, stream_index, kSamplePurpose)) {
  if (truth_.dims() != spec.dims)
    throw DimensionError("sample stream: truth dims " + dims_string(truth_.dims()) +
                         " differ from spec dims " + dims_string(spec.dims));
}

void SampleStream::fill(StreamSampled& out) {
  if (out.x.dims() != truth_.dims()) out.x = Tensor3d(truth_.dims());
  double* x = out.x.data();
  const Index n = out.x.size();
  for (Index i = 0; i < n; ++i) x[i] = normal_();
  const double noise = normal_();
  out.y = out.x.vec().dot(truth_.vec()) + sigma_ * noise;
  ++emitted_;
}

std::optional<StreamSampled> SampleStream::next() {
  StreamSampled s;
  fill(s);
  return s;
}

}  // namespace tensorstream
