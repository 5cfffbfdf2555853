#pragma once

// Synthetic ground truth and Gaussian-design sample streams.
//
// Randomness comes from xoshiro256++ (Blackman & Vigna) seeded through
// splitmix64; normals use Boost.Random's ziggurat sampler. Each replicate
// and each purpose within it (truth, samples) gets its own substream derived
// by hashing (seed, replicate, purpose), so runs are reproducible and
// replicates are independent regardless of execution order.

#include <cstdint>
#include <limits>
#include <optional>

#include <boost/random/normal_distribution.hpp>

#include "tensorstream/sample.hpp"
#include "tensorstream/tucker.hpp"

namespace tensorstream {

std::uint64_t splitmix64_next(std::uint64_t& state);

/// Hash of (seed, a, b) used to key independent substreams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t seed);

  /// Raw state, for checking against reference sequences.
  static Xoshiro256pp from_state(std::uint64_t s0, std::uint64_t s1, std::uint64_t s2,
                                 std::uint64_t s3) {
    Xoshiro256pp g(0);
    g.s_[0] = s0;
    g.s_[1] = s1;
    g.s_[2] = s2;
    g.s_[3] = s3;
    return g;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

/// Standard normal draws on top of an owned xoshiro256++ engine.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : engine_(seed) {}
  double operator()() { return dist_(engine_); }
  double uniform01() { return engine_.uniform01(); }

 private:
  Xoshiro256pp engine_;
  boost::random::normal_distribution<double> dist_;
};

struct ProblemSpec {
  Dims3 dims{10, 10, 10};
  Dims3 ranks{1, 1, 1};
  double lambda = 2.0;  ///< min_k sigma_{r_k}(M_k(T*))
  double sigma = 1.0;   ///< noise standard deviation
  std::uint64_t seed = 0;

  void validate() const;
  Index df() const { return degrees_of_freedom(dims, ranks); }
};

struct Truth {
  TuckerStated state;  ///< orthonormal factors, rescaled core
  Tensor3d tensor;     ///< T* = reconstruct(state)
};

/// Gaussian core rescaled so that min_k sigma_{r_k}(M_k(T*)) = lambda;
/// factors are the Q factors of matrices with i.i.d. Uniform[0, 1) entries.
Truth make_truth(const ProblemSpec& spec, std::uint64_t replicate = 0);

/// Endless source of samples X ~ iid N(0, 1), y = <X, T*> + sigma N(0, 1).
class SampleStream {
 public:
  SampleStream(const ProblemSpec& spec, Tensor3d truth, std::uint64_t stream_index = 0);

  std::optional<StreamSampled> next();

  /// Overwrites `out` in place, reusing its storage.
  void fill(StreamSampled& out);

  long emitted() const { return emitted_; }
  const Dims3& dims() const { return truth_.dims(); }

 private:
  Tensor3d truth_;
  double sigma_;
  NormalSource normal_;
  long emitted_ = 0;
};

}  // namespace tensorstream
