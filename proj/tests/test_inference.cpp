#include <doctest.h>

#include "oracles.hpp"
#include "tensorstream/statistics.hpp"

using namespace tensorstream;
using namespace testutil;

namespace {

InferenceStated seeded_state(NormalSource& rng, const Dims3& dims, const Dims3& ranks) {
  auto st = InferenceStated::start(dims);
  st.t = 5;
  st.t_hat = random_tensor(rng, dims);
  Factors<double> f;
  for (std::size_t k = 0; k < 3; ++k) f[k] = random_mat(rng, dims[k], ranks[k]);
  st.seed_bases(f);
  return project_factors(st);
}

Tensor3d naive_core(const Tensor3d& t, const Factors<double>& u) {
  auto y = naive_mode_product(t, u[0].transpose(), 0);
  y = naive_mode_product(y, u[1].transpose(), 1);
  return naive_mode_product(y, u[2].transpose(), 2);
}

struct VectorSource {
  std::vector<StreamSampled> items;
  std::size_t pos = 0;
  std::optional<StreamSampled> next() {
    if (pos >= items.size()) return std::nullopt;
    return items[pos++];
  }
};

}  // namespace

TEST_CASE("linear forms") {
  const Dims3 d{3, 4, 5};
  CHECK_THROWS_AS(LinearFormd::dense(Tensor3d(d)), PreconditionError);
  CHECK_THROWS_AS(LinearFormd::entry(d, {3, 0, 0}), DimensionError);
  CHECK_THROWS_AS(LinearFormd::sparse(d, {{{0, 0, 0}, 1.0}, {{0, 0, 0}, -1.0}}), PreconditionError);
  const auto c = LinearFormd::contrast(d, {0, 1, 2}, {2, 3, 4});
  CHECK(c.m(0, 1, 2) == 1);
  CHECK(c.m(2, 3, 4) == -1);
  CHECK(c.m.norm() == doctest::Approx(std::sqrt(2.0)));

  NormalSource rng(41);
  Factors<double> u;
  for (std::size_t k = 0; k < 3; ++k) u[k] = random_mat(rng, d[k], 2);
  const auto sparse = partial_contractions(c, u);
  const auto dense = partial_contractions(c.m, u);
  for (std::size_t k = 0; k < 3; ++k) CHECK(rel_diff(sparse[k], dense[k]) < 1e-14);
  CHECK(rel_diff(full_contraction(c, u), naive_core(c.m, u)) < 1e-13);
}

TEST_CASE("debiased average") {
  NormalSource rng(42);
  const Dims3 d{3, 3, 4}, r{1, 1, 1};
  SUBCASE("base case is one unconstrained gradient step from T(0)") {
    const auto s = random_state(rng, d, r);
    StreamSampled z{random_tensor(rng, d), 0.7};
    const auto st = debias_update(InferenceStated::start(d), s, z);
    const auto t0 = reconstruct(s);
    const double res = inner(t0, z.x) - z.y;
    CHECK(st.t == 1);
    CHECK(rel_diff(st.t_hat, t0 - z.x * res) < 1e-14);
  }
  SUBCASE("noiseless stream held at the truth") {
    const auto s = random_state(rng, d, r, true);
    const auto truth = reconstruct(s);
    auto st = InferenceStated::start(d);
    for (int i = 0; i < 6; ++i) {
      StreamSampled z{random_tensor(rng, d), 0};
      z.y = inner(truth, z.x);
      st = debias_update(st, s, z);
      CHECK(rel_diff(st.t_hat, truth) < 1e-13);
    }
  }
  SUBCASE("dimension mismatch") {
    const auto s = random_state(rng, d, r);
    StreamSampled z{Tensor3d(3, 3, 3), 0};
    CHECK_THROWS_AS(debias_update(InferenceStated::start(d), s, z), DimensionError);
  }
}

TEST_CASE("recursive averages equal their batch forms") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto c = oracles::telescope_check(500 + seed);
    CAPTURE(seed);
    CHECK(c.t_hat < 1e-12);
    CHECK(c.sigma2 < 1e-12);
    CHECK(c.s2 < 1e-12);
  }
}

TEST_CASE("projected factors") {
  NormalSource rng(43);
  const Dims3 d{6, 5, 4};
  SUBCASE("exact recovery of a rank-one average") {
    const auto truth = random_state(rng, d, {1, 1, 1}, true);
    auto st = InferenceStated::start(d);
    st.t = 1;
    st.t_hat = reconstruct(truth);
    st.seed_bases(truth.factors);
    st = project_factors(st);
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(sin_theta(st.proj_factors[k], truth.factors[k]).frobenius < 1e-8);
  }
  SUBCASE("singular values agree with a full SVD of the companion matricization") {
    const Dims3 r{2, 2, 2};
    auto st = InferenceStated::start(d);
    st.t = 3;
    st.t_hat = random_tensor(rng, d);
    Factors<double> f;
    for (std::size_t k = 0; k < 3; ++k) f[k] = random_mat(rng, d[k], r[k]);
    st.seed_bases(f);
    const auto before = st.proj_factors;
    st = project_factors(st);
    for (int k = 0; k < 3; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const int k1 = cyclic_mode(k, 1), k2 = cyclic_mode(k, 2);
      auto y = naive_mode_product(st.t_hat, before[static_cast<std::size_t>(k1)].transpose(), k1);
      y = naive_mode_product(y, before[static_cast<std::size_t>(k2)].transpose(), k2);
      Eigen::JacobiSVD<MatXd> svd(matricize(y, k));
      for (Index j = 0; j < 2; ++j)
        CHECK(st.lambda_hat[ku](j) == doctest::Approx(svd.singularValues()(j)).epsilon(1e-12));
      CHECK(has_orthonormal_columns(st.proj_factors[ku]));
      CHECK(st.lambda_hat[ku](0) >= st.lambda_hat[ku](1));
      CHECK(st.lambda_hat[ku](1) >= 0);
      CHECK(rel_diff(st.prev_factors[ku], before[ku]) == 0);
    }
  }
  SUBCASE("zero average gives zero singular values and orthonormal bases") {
    auto st = InferenceStated::start(d);
    st.t = 1;
    Factors<double> f;
    for (std::size_t k = 0; k < 3; ++k) f[k] = random_mat(rng, d[k], 1);
    st.seed_bases(f);
    st = project_factors(st);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(st.lambda_hat[k].norm() == 0);
      CHECK(has_orthonormal_columns(st.proj_factors[k]));
    }
    CHECK_THROWS_AS(factor_region(st, 0, 0.05), NumericalError);
  }
  SUBCASE("unseeded bases") {
    CHECK_THROWS_AS(project_factors(InferenceStated::start(d)), PreconditionError);
  }
}

TEST_CASE("projection is idempotent") {
  NormalSource rng(44);
  const auto st = seeded_state(rng, {5, 4, 6}, {2, 2, 2});
  const auto once = oracles::dense_projection(st.t_hat, st.proj_factors);
  const auto twice = oracles::dense_projection(once, st.proj_factors);
  CHECK(rel_diff(once, twice) < 1e-12);
}

TEST_CASE("linear form estimate") {
  NormalSource rng(45);
  const Dims3 d{5, 4, 6};
  const auto st = seeded_state(rng, d, {2, 2, 2});
  const auto projected = oracles::dense_projection(st.t_hat, st.proj_factors);

  SUBCASE("dense projection oracle") {
    const auto m = LinearFormd::dense(random_tensor(rng, d));
    CHECK(linear_form_estimate(st, m) == doctest::Approx(inner(projected, m.m)).epsilon(1e-12));
  }
  SUBCASE("an average already in the projected space is read off directly") {
    auto in_space = st;
    in_space.t_hat = projected;
    const auto e = LinearFormd::entry(d, {0, 0, 0});
    CHECK(linear_form_estimate(in_space, e) == doctest::Approx(projected(0, 0, 0)).epsilon(1e-12));
  }
  SUBCASE("contrast is the difference of entries") {
    const auto c = LinearFormd::contrast(d, {0, 0, 0}, {1, 1, 1});
    CHECK(linear_form_estimate(st, c) ==
          doctest::Approx(projected(0, 0, 0) - projected(1, 1, 1)).epsilon(1e-12));
  }
  SUBCASE("linearity in the form") {
    const auto m1 = random_tensor(rng, d), m2 = random_tensor(rng, d);
    const double a = 0.7, b = -1.3;
    const double combo = linear_form_estimate(st, LinearFormd::dense(m1 * a + m2 * b));
    const double split = a * linear_form_estimate(st, LinearFormd::dense(m1)) +
                         b * linear_form_estimate(st, LinearFormd::dense(m2));
    CHECK(std::abs(combo - split) < 1e-12 * std::max(1.0, std::abs(combo)));
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(linear_form_estimate(st, LinearFormd::entry({5, 4, 5}, {0, 0, 0})),
                    DimensionError);
  }
}

TEST_CASE("variance increments") {
  NormalSource rng(46);
  const Dims3 d{5, 4, 6};
  const auto st = seeded_state(rng, d, {2, 1, 2});
  const auto x = random_tensor(rng, d);

  SUBCASE("dense projector oracle") {
    for (const auto& m : {LinearFormd::dense(random_tensor(rng, d)),
                          LinearFormd::contrast(d, {1, 2, 3}, {4, 0, 5})}) {
      const double fast = projection_variance_increment(x, st.proj_factors, m);
      const double dense = oracles::dense_variance_increment(x, st.proj_factors, m.m);
      CHECK(fast == doctest::Approx(dense).epsilon(1e-12));
    }
  }
  SUBCASE("a form inside the projected space contributes nothing") {
    const auto m = oracles::dense_projection(random_tensor(rng, d), st.proj_factors);
    CHECK(projection_variance_increment(x, st.proj_factors, LinearFormd::dense(m)) < 1e-24);
  }
  SUBCASE("constant residuals") {
    auto s = InferenceStated::start(d);
    for (int t = 1; t <= 7; ++t) {
      s.t = t;
      s = apply_variance_increments(s, 2.25, 0.5);
      CHECK(s.sigma2_hat == doctest::Approx(2.25).epsilon(1e-15));
      CHECK(s.s2_hat == doctest::Approx(0.5).epsilon(1e-15));
    }
    s.t = 0;
    CHECK_THROWS_AS(apply_variance_increments(s, 1.0, 1.0), PreconditionError);
  }
  SUBCASE("mean increment matches the closed-form S^2 under a Gaussian design") {
    const Dims3 dd{6, 5, 4};
    Factors<double> u;
    const Dims3 rr{2, 2, 1};
    for (std::size_t k = 0; k < 3; ++k) u[k] = random_orthonormal(rng, dd[k], rr[k]);
    const auto m = LinearFormd::dense(random_tensor(rng, dd));
    double s2 = 0;
    for (int k = 0; k < 3; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const int k1 = cyclic_mode(k, 1), k2 = cyclic_mode(k, 2);
      const MatXd perp = MatXd::Identity(dd[ku], dd[ku]) - u[ku] * u[ku].transpose();
      auto y = naive_mode_product(m.m, perp, k);
      y = naive_mode_product(y, u[static_cast<std::size_t>(k1)].transpose(), k1);
      y = naive_mode_product(y, u[static_cast<std::size_t>(k2)].transpose(), k2);
      s2 += y.squaredNorm();
    }
    double mean = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i)
      mean += projection_variance_increment(random_tensor(rng, dd), u, m) / n;
    CHECK(std::abs(mean - s2) < 0.05 * s2);
  }
}

TEST_CASE("normal quantiles") {
  // Bisection on the complementary error function as an independent oracle.
  auto upper = [](double alpha) {
    double lo = 0, hi = 10;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (0.5 * std::erfc(mid / std::sqrt(2.0)) > alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  CHECK(upper_normal_quantile(0.025) == doctest::Approx(1.959964).epsilon(5e-7));
  for (double a : {0.2, 0.1, 0.05, 0.025, 0.01, 0.005, 1e-4, 1e-6})
    CHECK(std::abs(upper_normal_quantile(a) - upper(a)) < 1e-9);
}

TEST_CASE("confidence interval for a linear form") {
  auto st = InferenceStated::start({2, 2, 2});
  st.t = 10000;
  st.sigma2_hat = 1;
  st.s2_hat = 1;
  const auto ci = ci_linear_form(st, 0.3, 0.05);
  CHECK(ci.half_width == doctest::Approx(0.01959964).epsilon(1e-6));
  CHECK(ci.center == 0.3);
  CHECK(ci.level == doctest::Approx(0.95));
  CHECK(ci.contains(0.31));
  CHECK_FALSE(ci.contains(0.33));
  st.s2_hat = 0;
  CHECK(ci_linear_form(st, 0.3, 0.05).degenerate());
  CHECK_THROWS_AS(ci_linear_form(st, 0.3, 0.0), PreconditionError);
  CHECK_THROWS_AS(ci_linear_form(st, 0.3, 1.0), PreconditionError);
  st.sigma2_hat = 1;
  st.s2_hat = 1;
  const double narrow = ci_linear_form(st, 0.0, 0.2).half_width;
  const double wide = ci_linear_form(st, 0.0, 0.01).half_width;
  CHECK(narrow < wide);
}

TEST_CASE("factor confidence region") {
  NormalSource rng(47);
  const Dims3 d{8, 6, 5};
  SUBCASE("closed form for equal rank-one singular values") {
    auto st = InferenceStated::start(d);
    st.t = 400;
    st.sigma2_hat = 1.7;
    Factors<double> f;
    for (std::size_t k = 0; k < 3; ++k) f[k] = random_mat(rng, d[k], 1);
    st.seed_bases(f);
    const double lam = 2.5;
    st.lambda_hat[0] = VecXd::Constant(1, lam);
    const auto reg = factor_region(st, 0, 0.05);
    const double p = 8, t = 400, s2 = 1.7;
    const double z = upper_normal_quantile(0.05);
    CHECK(reg.bound() ==
          doctest::Approx(p * s2 / (t * lam * lam) + z * std::sqrt(2 * p) * s2 / (t * lam * lam))
              .epsilon(1e-12));
    CHECK(reg.membership(reg.basis));
    CHECK(reg.sin_theta_sq(reg.basis) < 1e-14);
  }
  SUBCASE("zero singular value") {
    auto st = InferenceStated::start(d);
    st.t = 10;
    Factors<double> f;
    for (std::size_t k = 0; k < 3; ++k) f[k] = random_mat(rng, d[k], 2);
    st.seed_bases(f);
    st.lambda_hat[1] = VecXd::Zero(2);
    st.lambda_hat[1](0) = 1;
    CHECK_THROWS_AS(factor_region(st, 1, 0.05), NumericalError);
  }
}

TEST_CASE("gauge invariance of the inference outputs") {
  NormalSource rng(48);
  const Dims3 d{5, 4, 6}, r{2, 2, 2};
  auto st = seeded_state(rng, d, r);
  st.sigma2_hat = 1.3;
  const auto form = LinearFormd::dense(random_tensor(rng, d));
  const auto x = random_tensor(rng, d);
  auto rotated = st;
  for (std::size_t k = 0; k < 3; ++k)
    rotated.proj_factors[k] = st.proj_factors[k] * random_orthonormal(rng, r[k], r[k]);
  CHECK(linear_form_estimate(rotated, form) ==
        doctest::Approx(linear_form_estimate(st, form)).epsilon(1e-12));
  CHECK(projection_variance_increment(x, rotated.proj_factors, form) ==
        doctest::Approx(projection_variance_increment(x, st.proj_factors, form)).epsilon(1e-12));
  const auto a = factor_region(st, 0, 0.05), b = factor_region(rotated, 0, 0.05);
  for (int i = 0; i < 10; ++i) {
    const auto cand = random_orthonormal(rng, d[0], r[0]);
    CHECK(a.sin_theta_sq(cand) == doctest::Approx(b.sin_theta_sq(cand)).epsilon(1e-10));
    CHECK(a.membership(cand) == b.membership(cand));
  }
}

TEST_CASE("online inference loop") {
  ProblemSpec spec;
  spec.dims = {5, 4, 4};
  spec.ranks = {1, 1, 1};
  spec.seed = 9;

  SUBCASE("record count and invariants") {
    const auto truth = make_truth(spec);
    SampleStream stream(spec, truth.tensor);
    const auto sched = StepSchedule::for_df(5e-3, 0.6, spec.df());
    const auto recs = run_inference(truth.state, stream, sched,
                                    LinearFormd::entry(spec.dims, {0, 0, 0}), {60, 15, 0.05});
    CHECK(recs.size() == 45);
    CHECK(recs.front().t == 16);
    CHECK(recs.back().t == 60);
    for (const auto& r : recs) {
      CHECK(r.sigma2_hat >= 0);
      CHECK(r.s2_hat >= 0);
      CHECK(r.ci.half_width >= 0);
    }
  }
  SUBCASE("noiseless stream at the truth: exact estimates and zero-width intervals") {
    spec.sigma = 0;
    const auto truth = make_truth(spec);
    SampleStream stream(spec, truth.tensor);
    const auto form = LinearFormd::entry(spec.dims, {1, 2, 3});
    const double m_star = inner(truth.tensor, form.m);
    const auto sched = StepSchedule::for_df(5e-3, 0.6, spec.df());
    OnlineInference<double, SampleStream> engine(truth.state, sched, form, {40, 10, 0.05});
    const auto recs = engine.run(stream);
    REQUIRE(recs.size() == 30);
    for (const auto& r : recs) {
      CHECK(std::abs(r.m_hat - m_star) < 1e-12);
      CHECK(r.ci.half_width < 1e-12);
    }
    for (const auto& u : engine.state().proj_factors) CHECK(has_orthonormal_columns(u));
  }
  SUBCASE("the source may run dry before the horizon") {
    const auto truth = make_truth(spec);
    SampleStream stream(spec, truth.tensor);
    VectorSource src;
    for (int i = 0; i < 12; ++i) src.items.push_back(*stream.next());
    const auto sched = StepSchedule::for_df(5e-3, 0.6, spec.df());
    OnlineInference<double, VectorSource> engine(truth.state, sched,
                                                 LinearFormd::entry(spec.dims, {0, 0, 0}),
                                                 {100, 5, 0.05});
    CHECK(engine.run(src).size() == 7);
    CHECK(engine.steps() == 12);
  }
  SUBCASE("invalid options") {
    const auto truth = make_truth(spec);
    const auto sched = StepSchedule::for_df(5e-3, 0.6, spec.df());
    using Engine = OnlineInference<double, SampleStream>;
    const auto form = LinearFormd::entry(spec.dims, {0, 0, 0});
    CHECK_THROWS_AS(Engine(truth.state, sched, form, {10, 0, 0.05}), PreconditionError);
    CHECK_THROWS_AS(Engine(truth.state, sched, form, {10, 1, 1.5}), PreconditionError);
    CHECK_THROWS_AS(Engine(truth.state, sched, LinearFormd::entry({4, 4, 4}, {0, 0, 0}), {10, 1, 0.05}),
                    DimensionError);
  }
}

TEST_CASE("default warm-up") {
  CHECK(default_warmup(StepSchedule{5e-4, 0.501, 8137}) == 8137);
  CHECK(default_warmup(StepSchedule{5e-4, 0.501, 50}) == 200);
}
