#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stabilab/bounds.hpp"
#include "stabilab/verify.hpp"

#include <cmath>

using namespace stabilab;

namespace {

Dataset unit_data(std::size_t n) {
  DatasetSpec spec{.n = n, .d = 1, .radius = std::sqrt(2.0), .generator = Generator::unit_fixed};
  return make_synthetic_dataset(spec, 0);
}

std::vector<Vec> points(std::initializer_list<double> xs) {
  std::vector<Vec> out;
  for (double x : xs) out.push_back(Vec::Constant(1, x));
  return out;
}

StabilityBound fixed_bound(double value, double order = 1.0) {
  StabilityBound b;
  b.value = value;
  b.log_value = std::log(value);
  b.order = order;
  return b;
}

TransportEstimate estimate(double value, TransportMethod m, double se = 0.0, double p = 1.0) {
  return {value, p, m, 64, se};
}

}  // namespace

TEST_CASE("contraction on the deterministic full-batch quadratic") {
  const auto ds = unit_data(10);
  const auto ok = check_contraction(LossModel::quadratic(), ds, 0.1, 10, 0.9, 50, 4, 1);
  CHECK(ok.passed);
  CHECK(std::abs(ok.margin) <= 1e-12);
  CHECK_FALSE(check_contraction(LossModel::quadratic(), ds, 0.1, 10, 0.5, 50, 4, 1).passed);
  ContractionOptions same;
  same.theta_a = Vec::Constant(1, 0.3);
  same.theta_b = Vec::Constant(1, 0.3);
  const auto trivial = check_contraction(LossModel::quadratic(), ds, 0.1, 10, 0.5, 50, 4, 1, same);
  CHECK(trivial.passed);
}

TEST_CASE("contraction certificates are bitwise reproducible") {
  DatasetSpec spec{.n = 30, .d = 2, .radius = 1.0};
  const auto ds = make_synthetic_dataset(spec, 2);
  ContractionOptions o1, o8;
  o1.threads = 1;
  o8.threads = 8;
  const auto a = check_contraction(LossModel::ridge_quadratic(1.0), ds, 0.05, 3, 0.975, 80, 32, 5, o1);
  const auto b = check_contraction(LossModel::ridge_quadratic(1.0), ds, 0.05, 3, 0.975, 80, 32, 5, o8);
  CHECK(a.passed);
  CHECK(a.margin == b.margin);
}

TEST_CASE("drift equality point") {
  const auto ds = unit_data(10);
  const auto grid = points({0.0});
  const auto c = check_drift(LossModel::quadratic(), ds, 0.1, 1, Lyapunov::one_plus_norm, 0.9, 0.2, grid,
                             SamplingMode::exact(), 0);
  CHECK(c.passed);
  CHECK(std::abs(c.margin) <= 1e-9);
  CHECK(c.details.at("lhs_at_worst") == doctest::Approx(1.1).epsilon(1e-15));
  const auto half = check_drift(LossModel::quadratic(), ds, 0.1, 1, Lyapunov::one_plus_norm, 0.9, 0.1, grid,
                                SamplingMode::exact(), 0);
  CHECK_FALSE(half.passed);
}

TEST_CASE("drift with a frozen kernel") {
  const auto ds = unit_data(5);
  const auto grid = points({-2, -1, 0, 1, 2});
  // Identity kernel: V <= delta V + L needs L >= (1 - delta) max V = 0.3.
  CHECK(check_drift(LossModel::quadratic(), ds, 0.0, 1, Lyapunov::one_plus_norm, 0.9, 0.3, grid, SamplingMode::exact(), 0)
            .passed);
  CHECK_FALSE(
      check_drift(LossModel::quadratic(), ds, 0.0, 1, Lyapunov::one_plus_norm, 0.9, 0.29, grid, SamplingMode::exact(), 0)
          .passed);
  CHECK_THROWS(check_drift(LossModel::quadratic(), ds, 0.0, 1, Lyapunov::one_plus_norm, 1.0, 0.3, grid,
                           SamplingMode::exact(), 0));
}

TEST_CASE("drift over a grid for the strongly convex lemma constants") {
  DatasetSpec spec{.n = 12, .d = 2, .radius = 0.5};
  const auto pair = make_neighbor(make_synthetic_dataset(spec, 4), 0, 9);
  const auto loss = LossModel::ridge_quadratic(1.0);
  const auto c = derive_constants(loss, pair);
  const double eta = 0.01;
  const Vec star = find_minimizer(loss, pair.perturbed, Vec::Zero(2));
  const double q2 = star.squaredNorm();
  const double L = 2 * eta * c.mu - eta * eta * c.K1 * c.K1 - 56 * eta * eta * c.D * c.D * c.K2 * c.K2 +
                   64 * eta * eta * c.D * c.D * c.K2 * c.K2 * q2;
  LyapunovOptions o;
  o.minimizer = star;
  const auto grid = ball_grid(star, 2.0, 9);
  const auto exact = check_drift(loss, pair.perturbed, eta, 2, Lyapunov::one_plus_sq_dist_to_min, 1 - eta * c.mu,
                                 std::max(L, 0.0), grid, SamplingMode::exact(), 0, o);
  CHECK(exact.passed);
  const auto mc = check_drift(loss, pair.perturbed, eta, 2, Lyapunov::one_plus_sq_dist_to_min, 1 - eta * c.mu,
                              std::max(L, 0.0), grid, SamplingMode::monte_carlo(512), 3, o);
  CHECK(mc.passed);
}

TEST_CASE("kernel gap") {
  const auto base = unit_data(4);
  const NeighborPair same{base, base, 0};
  const auto grid = points({-1, 0, 1});
  for (double gamma : {0.0, 0.3}) {
    const auto c = check_kernel_gap(LossModel::quadratic(), same, 0.1, 2, Lyapunov::one_plus_norm, gamma, grid, 8, 1);
    CHECK(c.passed);
    CHECK(c.details.at("measured_gap") == 0.0);
  }

  DataPoint flip = base.points[1];
  flip.label = -1.0;
  const auto pair = make_neighbor(base, 1, flip);
  // b = n: the one-step gap is (eta/n)|Delta(a y)| = 0.1 * 2 / 4 at every theta.
  const auto c = check_kernel_gap(LossModel::quadratic(), pair, 0.1, 4, Lyapunov::one_plus_norm, 0.05, points({0.0}), 4, 1);
  CHECK(c.details.at("measured_gap") == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(c.passed);
  CHECK_FALSE(
      check_kernel_gap(LossModel::quadratic(), pair, 0.1, 4, Lyapunov::one_plus_norm, 0.0, points({0.0}), 4, 1).passed);
}

TEST_CASE("minorization at the worked Gaussian parameters") {
  // d = 1, Sigma = 0.5, eta = 0.1, m = 1, K0 = 2.44, eps = 0.5, K1 = 1, grad_sup = 1, M = 1.
  const auto loss = LossModel::regularized_sine(2.0, 0.5);
  DatasetSpec spec{.n = 6, .d = 1, .radius = 1.0};
  const auto ds = make_synthetic_dataset(spec, 3);
  MinorizationOptions o;
  o.theta_star = find_minimizer(loss, ds, Vec::Zero(1));
  o.K1 = 1.0;
  o.grad_sup = 1.0;
  const Vec sigma = Vec::Constant(1, 0.5);
  const auto cert = check_minorization_gaussian(loss, ds, 0.1, 2, sigma, 1.0, 2.44, 0.5, 1.0, 33, 0, o);
  CHECK(cert.passed);
  CHECK(cert.details.at("log_eta_hat") == doctest::Approx(-2746.1971327097285605).epsilon(1e-12));
  CHECK(cert.margin > 100.0);
  const auto single = check_minorization_gaussian(loss, ds, 0.1, 2, sigma, 1.0, 2.44, 0.5, 1.0, 1, 0, o);
  CHECK(single.details.at("min_log_ratio") == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(single.passed);
}

TEST_CASE("minorization with nearly identity noise and a tiny step") {
  const auto loss = LossModel::regularized_sine(2.0, 0.5);
  DatasetSpec spec{.n = 4, .d = 2, .radius = 1.0};
  const auto ds = make_synthetic_dataset(spec, 8);
  const auto c = derive_constants(loss, ds);
  const double eta = 1e-3;
  const double K0 = k0_constant(c.m, eta, c.K1, c.K2, c.D, 0.0, c.K, 2.0);
  MinorizationOptions o;
  o.theta_star = find_minimizer(loss, ds, Vec::Zero(2));
  const double g = max_grad_norm(loss, ds, *o.theta_star);
  const auto cert =
      check_minorization_gaussian(loss, ds, eta, 2, Vec::Constant(2, 0.999), c.m, K0, 0.5, 1.0 + eta * g, 9, 0, o);
  CHECK(cert.passed);
}

TEST_CASE("dominance") {
  const auto b = fixed_bound(0.8);
  const auto pass = check_bound_dominates(estimate(0.05, TransportMethod::coupled), b);
  CHECK(pass.passed);
  CHECK(pass.margin == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_FALSE(check_bound_dominates(estimate(0.9, TransportMethod::assignment, 0.01), b).passed);
  CHECK(check_bound_dominates(estimate(0.0, TransportMethod::coupled), fixed_bound(0.0)).passed);
  CHECK(check_bound_dominates(estimate(0.82, TransportMethod::assignment, 0.01), b).passed);
  CHECK(check_bound_dominates(estimate(0.85, TransportMethod::assignment), b, MarginRule::fixed(0.1)).passed);
  CHECK_THROWS(check_bound_dominates(estimate(0.1, TransportMethod::coupled, 0.0, 2.0), b));
}

TEST_CASE("dominance compares powers for order-2 bounds") {
  const auto b = fixed_bound(4.0, 2.0);
  CHECK(check_bound_dominates(estimate(1.9, TransportMethod::coupled, 0.0, 2.0), b).passed);
  CHECK_FALSE(check_bound_dominates(estimate(2.1, TransportMethod::coupled, 0.0, 2.0), b).passed);
}

TEST_CASE("dominance falls back to logs beyond double range") {
  StabilityBound b;
  b.value = kInf();
  b.log_value = 2000.0;
  const auto c = check_bound_dominates(estimate(3.0, TransportMethod::coupled), b);
  CHECK(c.passed);
  CHECK(c.details.at("log_space") == 1.0);
}

TEST_CASE("ball grid") {
  CHECK(ball_grid(Vec::Zero(1), 2.0, 5).size() == 5);
  const auto sq = ball_grid(Vec::Zero(2), 1.0, 5);
  for (const auto& v : sq) CHECK(v.norm() <= 1.0 + 1e-15);
  CHECK(sq.size() > 5);
  const auto axes = ball_grid(Vec::Zero(3), 1.0, 5);
  for (const auto& v : axes) CHECK(v.norm() <= 1.0 + 1e-15);
  CHECK(ball_grid(Vec::Constant(1, 0.7), 1.0, 1).front()(0) == 0.7);
}
