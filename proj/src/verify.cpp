#include "stabilab/verify.hpp"

#include "stabilab/combinatorics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stabilab {

namespace {

constexpr double kSigmas = 3.0;

std::string rule_text(std::size_t samples, const char* what) {
  return "mean over " + std::to_string(samples) + " " + what + " plus 3 standard errors; 1e-12 relative rounding allowance";
}

std::uint64_t checked_enumeration(std::size_t n, std::size_t b) {
  const auto count = binomial(n, b);
  if (count > kEnumerationCap)
    throw std::invalid_argument("exact minibatch enumeration needs C(n,b) <= 20000; use monte_carlo");
  return count;
}

}  // namespace

std::string to_string(CertificateKind k) {
  switch (k) {
    case CertificateKind::contraction: return "contraction";
    case CertificateKind::drift: return "drift";
    case CertificateKind::kernel_gap: return "kernel_gap";
    case CertificateKind::minorization: return "minorization";
    case CertificateKind::dominance: return "dominance";
  }
  return "unknown";
}

std::string to_string(Lyapunov v) {
  return v == Lyapunov::one_plus_norm ? "one_plus_norm" : "one_plus_sq_dist_to_min";
}

Lyapunov lyapunov_from_string(const std::string& name) {
  if (name == "one_plus_norm") return Lyapunov::one_plus_norm;
  if (name == "one_plus_sq_dist_to_min") return Lyapunov::one_plus_sq_dist_to_min;
  throw std::invalid_argument("unknown Lyapunov function '" + name + "'");
}

double rounding_allowance(double rhs) { return 1e-12 * std::max(1.0, std::abs(rhs)); }

double lyapunov_value(Lyapunov v, const Vec& theta, const std::optional<Vec>& minimizer) {
  if (v == Lyapunov::one_plus_norm) return 1.0 + theta.norm();
  if (!minimizer) throw std::invalid_argument("one_plus_sq_dist_to_min needs a computed minimizer");
  return 1.0 + (theta - *minimizer).squaredNorm();
}

std::vector<Vec> ball_grid(const Vec& center, double radius, std::size_t per_axis) {
  const Eigen::Index d = center.size();
  if (per_axis <= 1 || radius == 0.0) return {center};
  auto tick = [&](std::size_t i) {
    return -radius + 2.0 * radius * static_cast<double>(i) / static_cast<double>(per_axis - 1);
  };
  std::vector<Vec> grid;
  if (d == 1) {
    for (std::size_t i = 0; i < per_axis; ++i) grid.push_back(center + Vec::Constant(1, tick(i)));
  } else if (d == 2) {
    for (std::size_t i = 0; i < per_axis; ++i)
      for (std::size_t j = 0; j < per_axis; ++j) {
        Vec off(2);
        off << tick(i), tick(j);
        if (off.norm() <= radius) grid.push_back(center + off);
      }
  } else {
    // Higher dimensions: the coordinate axes only.
    grid.push_back(center);
    for (Eigen::Index a = 0; a < d; ++a)
      for (std::size_t i = 0; i < per_axis; ++i) {
        if (tick(i) == 0.0) continue;
        grid.push_back(center + tick(i) * Vec::Unit(d, a));
      }
  }
  return grid;
}

Certificate check_contraction(const LossModel& loss, const Dataset& dataset, double eta, std::size_t b,
                              double claimed_rate, std::uint64_t k_max, std::size_t R, std::uint64_t seed,
                              const ContractionOptions& options) {
  if (!(claimed_rate > 0.0 && claimed_rate < 1.0)) throw std::invalid_argument("claimed rate must lie in (0, 1)");
  if (R == 0) throw std::invalid_argument("contraction check needs R >= 1");
  const auto d = static_cast<Eigen::Index>(dataset.dim);
  const Vec a = options.theta_a.value_or(Vec::Ones(d));
  const Vec z = options.theta_b.value_or(Vec::Zero(d));
  SGDConfig cfg;
  cfg.eta = eta;
  cfg.batch = b;
  cfg.k_max = k_max;
  cfg.theta0 = a;
  cfg.master_seed = seed;

  std::vector<std::vector<double>> runs(R);
  parallel_for(R, options.threads, [&](std::size_t r) {
    runs[r] = run_contraction_pair(loss, dataset, cfg, a, z, options.noise, r);
  });

  const double delta0 = (a - z).norm();
  Certificate cert;
  cert.kind = CertificateKind::contraction;
  cert.margin = kInf();
  cert.confidence = rule_text(R, "replicas");
  double worst_k = 0, worst_mean = 0, worst_rhs = 0;
  for (std::uint64_t k = 0; k <= k_max; ++k) {
    RunningStats s;
    for (const auto& run : runs) s.add(run[k]);
    const double rhs = std::pow(claimed_rate, static_cast<double>(k)) * delta0 + kSigmas * s.stderr_mean();
    const double margin = std::isnan(s.mean) ? -kInf() : rhs + rounding_allowance(rhs) - s.mean;
    if (margin < cert.margin) {
      cert.margin = margin;
      worst_k = static_cast<double>(k);
      worst_mean = s.mean;
      worst_rhs = rhs;
    }
  }
  cert.passed = cert.margin >= 0.0;
  cert.details = {{"claimed_rate", claimed_rate}, {"delta0", delta0},     {"k_max", static_cast<double>(k_max)},
                  {"replicas", static_cast<double>(R)}, {"worst_k", worst_k}, {"mean_at_worst", worst_mean},
                  {"rhs_at_worst", worst_rhs}};
  return cert;
}

Certificate check_drift(const LossModel& loss, const Dataset& dataset_hat, double eta, std::size_t b,
                        Lyapunov lyapunov, double claimed_delta, double claimed_L, const std::vector<Vec>& theta_grid,
                        SamplingMode mode, std::uint64_t seed, const LyapunovOptions& options) {
  if (theta_grid.empty()) throw std::invalid_argument("drift check needs a nonempty grid");
  if (!(claimed_delta > 0.0 && claimed_delta < 1.0)) throw std::invalid_argument("claimed delta must lie in (0, 1)");
  if (lyapunov == Lyapunov::one_plus_sq_dist_to_min && !options.minimizer)
    throw std::invalid_argument("one_plus_sq_dist_to_min needs a computed minimizer");
  const bool exact = mode.kind == SamplingMode::Kind::exact;
  if (exact) checked_enumeration(dataset_hat.size(), b);
  if (exact && options.noise.active() && lyapunov == Lyapunov::one_plus_norm)
    throw std::invalid_argument("exact drift with noise has no closed form for one_plus_norm; use monte_carlo");
  if (!exact && mode.samples == 0) throw std::invalid_argument("monte_carlo mode needs at least one sample");

  Certificate cert;
  cert.kind = CertificateKind::drift;
  cert.margin = kInf();
  double worst_lhs = 0, worst_rhs = 0, worst_index = 0;
  for (std::size_t g = 0; g < theta_grid.size(); ++g) {
    const Vec& theta = theta_grid[g];
    RunningStats s;
    if (exact) {
      // Zero-mean noise adds exactly eta^2 sigma^2 to E|theta_1 - theta*|^2.
      const double noise_term = options.noise.active() ? eta * eta * options.noise.sigma2() : 0.0;
      for_each_subset(dataset_hat.size(), b, [&](std::span<const std::size_t> omega) {
        s.add(lyapunov_value(lyapunov, step(loss, dataset_hat, theta, omega, eta), options.minimizer) + noise_term);
      });
    } else {
      for (std::size_t i = 0; i < mode.samples; ++i) {
        const auto omega = draw_minibatch(dataset_hat.size(), b, seed, g, i);
        std::optional<Vec> xi;
        if (options.noise.active()) {
          CounterRng rng(seed, g, StreamTag::noise, i);
          xi = options.noise.draw(rng);
        }
        s.add(lyapunov_value(lyapunov, step(loss, dataset_hat, theta, omega, eta, xi), options.minimizer));
      }
    }
    const double se = exact ? 0.0 : s.stderr_mean();
    const double rhs = claimed_delta * lyapunov_value(lyapunov, theta, options.minimizer) + claimed_L + kSigmas * se;
    const double margin = rhs + rounding_allowance(rhs) - s.mean;
    if (margin < cert.margin) {
      cert.margin = margin;
      worst_lhs = s.mean;
      worst_rhs = rhs;
      worst_index = static_cast<double>(g);
    }
  }
  cert.passed = cert.margin >= 0.0;
  cert.confidence = exact ? "exact minibatch enumeration; 1e-12 relative rounding allowance"
                          : rule_text(mode.samples, "Monte Carlo draws per grid point");
  cert.details = {{"claimed_delta", claimed_delta}, {"claimed_L", claimed_L},
                  {"grid_points", static_cast<double>(theta_grid.size())},
                  {"worst_grid_index", worst_index}, {"lhs_at_worst", worst_lhs}, {"rhs_at_worst", worst_rhs}};
  return cert;
}

Certificate check_kernel_gap(const LossModel& loss, const NeighborPair& pair, double eta, std::size_t b,
                             Lyapunov lyapunov, double claimed_gamma, const std::vector<Vec>& theta_grid,
                             std::size_t R, std::uint64_t seed, const LyapunovOptions& options) {
  if (theta_grid.empty()) throw std::invalid_argument("kernel gap check needs a nonempty grid");
  if (R == 0) throw std::invalid_argument("kernel gap check needs R >= 1");
  Certificate cert;
  cert.kind = CertificateKind::kernel_gap;
  cert.margin = kInf();
  // The coupled one-step distance upper-bounds W1, so a pass shows consistency rather than tightness.
  cert.confidence = rule_text(R, "coupled one-step draws per grid point");
  double measured = 0.0, worst_index = 0;
  for (std::size_t g = 0; g < theta_grid.size(); ++g) {
    const Vec& theta = theta_grid[g];
    RunningStats s;
    for (std::size_t r = 0; r < R; ++r) {
      const auto omega = draw_minibatch(pair.base.size(), b, seed, r, g);
      std::optional<Vec> xi;
      if (options.noise.active()) {
        CounterRng rng(seed, r, StreamTag::noise, g);
        xi = options.noise.draw(rng);
      }
      s.add((step(loss, pair.base, theta, omega, eta, xi) - step(loss, pair.perturbed, theta, omega, eta, xi)).norm());
    }
    const double V = lyapunov_value(lyapunov, theta, options.minimizer);
    const double ratio = s.mean / V;
    const double rhs = claimed_gamma + kSigmas * s.stderr_mean() / V;
    const double margin = rhs + rounding_allowance(rhs) - ratio;
    if (ratio > measured) measured = ratio;
    if (margin < cert.margin) {
      cert.margin = margin;
      worst_index = static_cast<double>(g);
    }
  }
  if (claimed_gamma == 0.0 && measured > 0.0) cert.margin = std::min(cert.margin, -measured);
  cert.passed = cert.margin >= 0.0;
  cert.details = {{"claimed_gamma", claimed_gamma}, {"measured_gap", measured},
                  {"grid_points", static_cast<double>(theta_grid.size())}, {"worst_grid_index", worst_index},
                  {"replicas", static_cast<double>(R)}};
  return cert;
}

Certificate check_minorization_gaussian(const LossModel& loss, const Dataset& dataset, double eta, std::size_t b,
                                        const Vec& sigma_diag, double m, double K0, double epsilon, double M,
                                        std::size_t n_grid, std::uint64_t seed, const MinorizationOptions& options) {
  (void)seed;  // the grid is deterministic
  const auto d = static_cast<Eigen::Index>(dataset.dim);
  if (d > 2) throw std::invalid_argument("minorization check is limited to d <= 2");
  if (sigma_diag.size() != d) throw std::invalid_argument("covariance dimension does not match the data");
  checked_enumeration(dataset.size(), b);
  const Vec theta_star = options.theta_star.value_or(find_minimizer(loss, dataset, Vec::Zero(d)));
  const double K1 = options.K1.value_or(derive_constants(loss, dataset).K1);
  const double g = options.grad_sup.value_or(max_grad_norm(loss, dataset, theta_star));
  const double grid_M[] = {M};
  const EtaHat eh = eta_hat_gaussian_log(sigma_diag, eta, m, K0, epsilon, K1, g, grid_M);

  const double R = 2.0 * K0 / m * (1.0 + epsilon);
  const auto thetas = ball_grid(theta_star, std::sqrt(std::max(R - 1.0, 0.0)), n_grid);
  const auto targets = ball_grid(theta_star, M, n_grid);
  const Vec precision = (eta * eta * sigma_diag).cwiseInverse();

  // Means of the Gaussian mixture components, one per minibatch.
  auto means = [&](const Vec& theta) {
    std::vector<Vec> mu;
    for_each_subset(dataset.size(), b, [&](std::span<const std::size_t> omega) {
      mu.push_back(step(loss, dataset, theta, omega, eta));
    });
    return mu;
  };
  auto log_density = [&](const std::vector<Vec>& mu, const Vec& y) {
    double top = -kInf();
    std::vector<double> e(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const Vec r = y - mu[i];
      e[i] = -0.5 * r.dot(precision.cwiseProduct(r));
      top = std::max(top, e[i]);
    }
    double s = 0.0;
    for (double x : e) s += std::exp(x - top);
    return top + std::log(s);
  };

  const auto ref = means(theta_star);
  double min_log_ratio = kInf();
  for (const auto& th : thetas) {
    const auto mu = means(th);
    for (const auto& y : targets) min_log_ratio = std::min(min_log_ratio, log_density(mu, y) - log_density(ref, y));
  }

  Certificate cert;
  cert.kind = CertificateKind::minorization;
  cert.margin = min_log_ratio - 0.5 * eh.log_eta_hat;
  cert.passed = cert.margin >= 0.0;
  cert.confidence = "deterministic grid (necessary-condition check); margin in log units";
  cert.details = {{"log_eta_hat", eh.log_eta_hat}, {"min_log_ratio", min_log_ratio}, {"R", R}, {"M", M},
                  {"grad_sup", g}, {"K1", K1}, {"theta_points", static_cast<double>(thetas.size())},
                  {"target_points", static_cast<double>(targets.size())}};
  return cert;
}

Certificate check_bound_dominates(const TransportEstimate& empirical, const StabilityBound& theoretical,
                                  MarginRule rule) {
  if (std::abs(empirical.p - theoretical.order) > 1e-12)
    throw std::invalid_argument("mismatched metric order: estimate p = " + std::to_string(empirical.p) +
                                ", bound order = " + std::to_string(theoretical.order));
  const double emp = std::pow(empirical.value, theoretical.order);
  const double allow =
      rule.kind == MarginRule::Kind::three_sigma ? kSigmas * empirical.stderr_pow : rule.rel * theoretical.value;

  Certificate cert;
  cert.kind = CertificateKind::dominance;
  const bool log_space = !std::isfinite(theoretical.value);
  if (log_space) {
    // Bound beyond double range: compare logs.
    cert.margin = emp > 0.0 ? theoretical.log_value - std::log(emp) : kInf();
  } else {
    cert.margin = theoretical.value + allow - emp;
  }
  cert.passed = cert.margin >= 0.0;
  cert.confidence = std::string(empirical.method == TransportMethod::coupled ? "coupled upper estimate, "
                                                                              : "plug-in estimate, ") +
                    (rule.kind == MarginRule::Kind::three_sigma ? "3 standard errors of the p-th power mean"
                                                                : "fixed relative margin");
  cert.details = {{"empirical", emp},         {"theoretical", theoretical.value},
                  {"theoretical_log", theoretical.log_value}, {"allowance", allow},
                  {"order", theoretical.order}, {"log_space", log_space ? 1.0 : 0.0}};
  return cert;
}

}  // namespace stabilab
