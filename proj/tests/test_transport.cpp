#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stabilab/rng.hpp"
#include "stabilab/transport.hpp"

#include <algorithm>
#include <numeric>

using namespace stabilab;

namespace {

SampleCloud<double> cloud(std::initializer_list<double> v) {
  SampleCloud<double> A(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) A(i++, 0) = x;
  return A;
}

SampleCloud<double> random_cloud(CounterRng& rng, Eigen::Index N, Eigen::Index d) {
  SampleCloud<double> A(N, d);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < d; ++j) A(i, j) = rng.normal();
  return A;
}

}  // namespace

TEST_CASE("exact 1-D values") {
  const auto A = cloud({0, 2});
  CHECK(wasserstein_exact_1d(1.0, A, A).value == 0.0);
  CHECK(wasserstein_exact_1d(1.0, cloud({5}), cloud({8})).value == 3.0);
  CHECK(wasserstein_exact_1d(1.0, A, cloud({1, 3})).value == 1.0);
  CHECK_THROWS_AS(wasserstein_exact_1d(1.0, A, cloud({1})), std::invalid_argument);
  CHECK_THROWS_AS(wasserstein_exact_1d(0.5, A, A), std::invalid_argument);
}

TEST_CASE("assignment values") {
  CHECK(wasserstein_assignment(2.0, cloud({0, 2}), cloud({1, 3})).value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(wasserstein_assignment(1.0, cloud({4, 1, 7}), cloud({7, 4, 1})).value == 0.0);
  SampleCloud<double> big(kAssignmentCap + 1, 1);
  big.setZero();
  CHECK_THROWS_AS(wasserstein_assignment(1.0, big, big), std::length_error);
}

TEST_CASE("assignment on a small brute-force instance") {
  CounterRng rng(5, 0, StreamTag::audit, 0);
  for (int t = 0; t < 30; ++t) {
    const auto A = random_cloud(rng, 6, 2), B = random_cloud(rng, 6, 2);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double c = 0.0;
      for (int i = 0; i < 6; ++i) c += (A.row(i) - B.row(perm[i])).norm();
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(wasserstein_assignment(1.0, A, B).value == doctest::Approx(best / 6.0).epsilon(1e-12));
  }
}

TEST_CASE("assignment matches the 1-D oracle") {
  CounterRng rng(8, 0, StreamTag::audit, 0);
  for (int t = 0; t < 100; ++t) {
    const auto N = static_cast<Eigen::Index>(1 + rng.below(64));
    const double p = t % 3 == 0 ? 1.0 : t % 3 == 1 ? 1.5 : 2.0;
    const auto A = random_cloud(rng, N, 1), B = random_cloud(rng, N, 1);
    CHECK(std::abs(wasserstein_assignment(p, A, B).value - wasserstein_exact_1d(p, A, B).value) <= 1e-12);
  }
}

TEST_CASE("coupled values") {
  CHECK(coupled_upper_bound(1.0, cloud({1, 2}), cloud({1, 2})).value == 0.0);
  CHECK(coupled_upper_bound(1.0, cloud({0}), cloud({3})).value == 3.0);
  const auto e = coupled_upper_bound(2.0, cloud({0, 0}), cloud({1, 3}));
  CHECK(e.value == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK(e.stderr_pow == doctest::Approx(4.0).epsilon(1e-15));
  std::vector<std::pair<Vec, Vec>> pairs{{Vec::Zero(1), Vec::Ones(1)}, {Vec::Zero(1), Vec::Constant(1, 3.0)}};
  CHECK(coupled_upper_bound(2.0, pairs).value == e.value);
}

TEST_CASE("assignment never exceeds the coupled pairing") {
  CounterRng rng(13, 0, StreamTag::audit, 0);
  for (int t = 0; t < 100; ++t) {
    const auto N = static_cast<Eigen::Index>(2 + rng.below(40));
    const auto d = static_cast<Eigen::Index>(1 + rng.below(3));
    const auto A = random_cloud(rng, N, d), B = random_cloud(rng, N, d);
    for (double p : {1.0, 1.5, 2.0}) CHECK(wasserstein_assignment(p, A, B).value <= coupled_upper_bound(p, A, B).value);
  }
}

TEST_CASE("metric axioms and monotonicity in p") {
  CounterRng rng(21, 0, StreamTag::audit, 0);
  for (int t = 0; t < 100; ++t) {
    const auto N = static_cast<Eigen::Index>(2 + rng.below(20));
    const auto A = random_cloud(rng, N, 2), B = random_cloud(rng, N, 2), C = random_cloud(rng, N, 2);
    double prev = 0.0;
    for (double p : {1.0, 1.5, 2.0}) {
      const double ab = wasserstein_assignment(p, A, B).value;
      CHECK(ab == wasserstein_assignment(p, B, A).value);
      CHECK(wasserstein_assignment(p, A, A).value == 0.0);
      CHECK(ab <= wasserstein_assignment(p, A, C).value + wasserstein_assignment(p, C, B).value + 1e-12);
      CHECK(ab >= prev - 1e-12);
      prev = ab;
    }
  }
}

TEST_CASE("float clouds are supported") {
  Matrix<float> A(2, 1), B(2, 1);
  A << 0.f, 2.f;
  B << 1.f, 3.f;
  CHECK(wasserstein_assignment(1.0, A, B).value == doctest::Approx(1.0));
}
