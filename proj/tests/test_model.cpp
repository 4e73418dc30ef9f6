#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stabilab/model.hpp"
#include "stabilab/rng.hpp"

#include <cmath>
#include <sstream>

using namespace stabilab;

namespace {

DataPoint point(std::initializer_list<double> a, double y) {
  DataPoint x;
  x.features = Vec(static_cast<Eigen::Index>(a.size()));
  Eigen::Index i = 0;
  for (double v : a) x.features(i++) = v;
  x.label = y;
  return x;
}

Vec vec(std::initializer_list<double> a) { return point(a, 0.0).features; }

std::vector<LossModel> all_families() {
  return {LossModel::quadratic(), LossModel::ridge_quadratic(0.7), LossModel::regularized_sine(2.0, 0.5),
          LossModel::scalar_power(1.5, 1.0)};
}

double max_rel_fd_error(const LossModel& loss, const Vec& theta, const DataPoint& x) {
  const double h = 1e-5;
  const Vec g = grad(loss, theta, x);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Vec tp = theta, tm = theta;
    tp(j) += h;
    tm(j) -= h;
    const double fd = (loss_value(loss, tp, x) - loss_value(loss, tm, x)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g(j)) / std::max(1.0, std::abs(g(j))));
  }
  return worst;
}

}  // namespace

TEST_CASE("grad matches the closed forms") {
  CHECK(grad(LossModel::quadratic(), vec({2, 0}), point({1, 0}, 1)).isApprox(vec({1, 0})));
  CHECK(grad(LossModel::ridge_quadratic(1.0), vec({0, 0}), point({1, 0}, 0)).norm() == 0.0);
  CHECK(grad(LossModel::regularized_sine(2.0, 0.5), vec({0}), point({1}, 0))(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(grad(LossModel::scalar_power(1.5, 1.0), vec({0.3}), point({0.0}, 0.3))(0) == 0.0);
}

TEST_CASE("sine gradient at the origin agrees with a central difference") {
  const auto loss = LossModel::regularized_sine(2.0, 0.5);
  CHECK(max_rel_fd_error(loss, vec({0}), point({1}, 0)) <= 1e-6);
}

TEST_CASE("analytic gradients agree with central differences for every family") {
  for (const auto& loss : all_families()) {
    CAPTURE(to_string(loss.family));
    const std::size_t d = loss.family == LossFamily::scalar_power ? 1 : 3;
    CounterRng rng(11, 0, StreamTag::audit, 0);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      Vec theta(static_cast<Eigen::Index>(d));
      for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) = 2.0 * rng.normal();
      DataPoint x;
      x.features = Vec(static_cast<Eigen::Index>(d));
      for (Eigen::Index j = 0; j < x.features.size(); ++j) x.features(j) = 0.5 * rng.normal();
      x.label = rng.uniform() - 0.5;
      if (loss.family == LossFamily::scalar_power && std::abs(theta(0) - x.label) < 1e-3) theta(0) += 0.01;
      worst = std::max(worst, max_rel_fd_error(loss, theta, x));
    }
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("loss factories reject bad parameters") {
  CHECK_THROWS_AS(LossModel::ridge_quadratic(0.0), std::invalid_argument);
  CHECK_THROWS_AS(LossModel::regularized_sine(-1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(LossModel::scalar_power(2.5, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(LossModel::scalar_power(1.0, 1.0), std::invalid_argument);
}

TEST_CASE("unit_fixed generator") {
  DatasetSpec spec{.n = 4, .d = 1, .radius = std::sqrt(2.0), .generator = Generator::unit_fixed};
  const auto ds = make_synthetic_dataset(spec, 0);
  REQUIRE(ds.size() == 4);
  for (const auto& x : ds.points) {
    CHECK(x.features(0) == 1.0);
    CHECK(x.label == 1.0);
  }
  spec.radius = 1.0;
  CHECK_THROWS(make_synthetic_dataset(spec, 0));
}

TEST_CASE("generated points respect the radius and are deterministic") {
  for (auto gen : {Generator::sphere_uniform, Generator::gaussian_clipped}) {
    DatasetSpec spec{.n = 100, .d = 3, .radius = 2.0, .label_lo = -3.0, .label_hi = 3.0, .generator = gen};
    const auto a = make_synthetic_dataset(spec, 7);
    const auto b = make_synthetic_dataset(spec, 7);
    REQUIRE(a.size() == 100);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.points[i].norm() <= 2.0);
      CHECK(a.points[i].features == b.points[i].features);
      CHECK(a.points[i].label == b.points[i].label);
    }
    const auto c = make_synthetic_dataset(spec, 8);
    CHECK(c.points[0].features != a.points[0].features);
  }
}

TEST_CASE("datasets are prefix-consistent in n") {
  DatasetSpec small{.n = 10, .d = 2, .radius = 1.0};
  DatasetSpec big = small;
  big.n = 40;
  const auto a = make_synthetic_dataset(small, 3);
  const auto b = make_synthetic_dataset(big, 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.points[i].features == b.points[i].features);
}

TEST_CASE("make_neighbor differs at exactly one index") {
  DatasetSpec spec{.n = 6, .d = 2, .radius = 1.5};
  const auto base = make_synthetic_dataset(spec, 1);
  const auto pair = make_neighbor(base, 2, 99);
  CHECK(pair.differing_index == 2);
  CHECK(pair.base.size() == pair.perturbed.size());
  CHECK(pair.base.radius == pair.perturbed.radius);
  for (std::size_t i = 0; i < base.size(); ++i) {
    const bool same = pair.base.points[i].features == pair.perturbed.points[i].features &&
                      pair.base.points[i].label == pair.perturbed.points[i].label;
    CHECK(same == (i != 2));
  }
  CHECK(pair.perturbed.points[2].norm() <= 1.5);
  CHECK_THROWS_AS(make_neighbor(base, 6, 99), std::invalid_argument);
}

TEST_CASE("a replacement equal to the original gives identical datasets") {
  DatasetSpec spec{.n = 4, .d = 1, .radius = std::sqrt(2.0), .generator = Generator::unit_fixed};
  const auto base = make_synthetic_dataset(spec, 0);
  const auto pair = make_neighbor(base, 2, 5);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pair.perturbed.points[i].features == base.points[i].features);
    CHECK(pair.perturbed.points[i].label == base.points[i].label);
  }
}

TEST_CASE("derived constants") {
  Dataset ds;
  ds.radius = 1.0;
  ds.dim = 1;
  ds.points = {point({0.6}, 0.8)};
  const auto sine = derive_constants(LossModel::regularized_sine(2.0, 0.5), ds);
  CHECK(sine.m == 1.0);
  CHECK(sine.K == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(derive_constants(LossModel::ridge_quadratic(1.0), ds).mu == 1.0);
  CHECK(derive_constants(LossModel::quadratic(), ds).mu == 0.0);
  CHECK(derive_constants(LossModel::quadratic(), ds).E == doctest::Approx(0.48).epsilon(1e-15));
}

TEST_CASE("derived constants certify with zero violations") {
  struct Case {
    LossModel loss;
    std::size_t d;
  };
  for (const auto& c : {Case{LossModel::quadratic(), 3}, Case{LossModel::ridge_quadratic(1.0), 3},
                        Case{LossModel::regularized_sine(2.0, 0.5), 2}}) {
    CAPTURE(to_string(c.loss.family));
    DatasetSpec spec{.n = 50, .d = c.d, .radius = 1.0};
    const auto ds = make_synthetic_dataset(spec, 21);
    const auto report = check_assumptions(c.loss, ds, derive_constants(c.loss, ds), 10000, 5);
    CHECK(report.evaluations > 0);
    CHECK(report.violations == 0);
  }
}

TEST_CASE("inflated strong convexity is caught") {
  DatasetSpec spec{.n = 50, .d = 3, .radius = 1.0};
  const auto ds = make_synthetic_dataset(spec, 21);
  const auto loss = LossModel::ridge_quadratic(1.0);
  auto c = derive_constants(loss, ds);
  c.mu *= 10.0;
  CHECK(check_assumptions(loss, ds, c, 10000, 5).violations > 0);
}

TEST_CASE("equal parameters make every inequality an equality") {
  Dataset ds;
  ds.radius = 1.0;
  ds.dim = 1;
  ds.points = {point({0.6}, 0.8)};
  const auto loss = LossModel::regularized_sine(2.0, 0.5);
  const auto c = derive_constants(loss, ds);
  const Vec t = vec({0.3});
  const double inner = (grad(loss, t, ds.points[0]) - grad(loss, t, ds.points[0])).dot(t - t);
  CHECK(inner == 0.0);
  CHECK(inner >= c.m * 0.0 - c.K);
}

TEST_CASE("minimizer of the ridge loss solves the normal equations") {
  DatasetSpec spec{.n = 20, .d = 2, .radius = 1.0};
  const auto ds = make_synthetic_dataset(spec, 4);
  const auto loss = LossModel::ridge_quadratic(0.5);
  const Vec t = find_minimizer(loss, ds, Vec::Zero(2));
  Mat H = 0.5 * Mat::Identity(2, 2);
  Vec r = Vec::Zero(2);
  for (const auto& x : ds.points) {
    H += x.features * x.features.transpose() / 20.0;
    r += x.features * x.label / 20.0;
  }
  CHECK((t - H.ldlt().solve(r)).norm() < 1e-10);
}

TEST_CASE("dataset jsonl round trip") {
  DatasetSpec spec{.n = 5, .d = 2, .radius = 1.0};
  const auto ds = make_synthetic_dataset(spec, 9);
  std::stringstream ss;
  write_dataset_jsonl(ss, ds);
  const auto back = read_dataset_jsonl(ss);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.points[i].features == ds.points[i].features);
    CHECK(back.points[i].label == ds.points[i].label);
  }
  CHECK(back.spec == ds.spec);
}
