#pragma once

#include "stabilab/bounds.hpp"
#include "stabilab/dynamics.hpp"
#include "stabilab/model.hpp"
#include "stabilab/transport.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stabilab {

enum class CertificateKind { contraction, drift, kernel_gap, minorization, dominance };

std::string to_string(CertificateKind k);

struct Certificate {
  CertificateKind kind = CertificateKind::contraction;
  bool passed = false;
  double margin = 0.0;  // signed slack, >= 0 iff passed
  std::map<std::string, double> details;
  std::string confidence;
};

enum class Lyapunov { one_plus_norm, one_plus_sq_dist_to_min };

std::string to_string(Lyapunov v);
Lyapunov lyapunov_from_string(const std::string& name);

// Floating allowance added to every right-hand side so exact equalities pass.
double rounding_allowance(double rhs);

struct ContractionOptions {
  std::optional<Vec> theta_a;  // default: all ones
  std::optional<Vec> theta_b;  // default: zero
  NoiseModel noise;
  unsigned threads = 1;
};

Certificate check_contraction(const LossModel& loss, const Dataset& dataset, double eta, std::size_t b,
                              double claimed_rate, std::uint64_t k_max, std::size_t R, std::uint64_t seed,
                              const ContractionOptions& options = {});

struct LyapunovOptions {
  NoiseModel noise;
  // Minimizer used by one_plus_sq_dist_to_min.
  std::optional<Vec> minimizer;
};

double lyapunov_value(Lyapunov v, const Vec& theta, const std::optional<Vec>& minimizer);

Certificate check_drift(const LossModel& loss, const Dataset& dataset_hat, double eta, std::size_t b,
                        Lyapunov lyapunov, double claimed_delta, double claimed_L, const std::vector<Vec>& theta_grid,
                        SamplingMode mode, std::uint64_t seed, const LyapunovOptions& options = {});

Certificate check_kernel_gap(const LossModel& loss, const NeighborPair& pair, double eta, std::size_t b,
                             Lyapunov lyapunov, double claimed_gamma, const std::vector<Vec>& theta_grid,
                             std::size_t R, std::uint64_t seed, const LyapunovOptions& options = {});

struct MinorizationOptions {
  std::optional<double> K1;
  std::optional<double> grad_sup;
  std::optional<Vec> theta_star;
};

Certificate check_minorization_gaussian(const LossModel& loss, const Dataset& dataset, double eta, std::size_t b,
                                        const Vec& sigma_diag, double m, double K0, double epsilon, double M,
                                        std::size_t n_grid, std::uint64_t seed,
                                        const MinorizationOptions& options = {});

struct MarginRule {
  enum class Kind { three_sigma, fixed } kind = Kind::three_sigma;
  double rel = 0.0;

  static MarginRule three_sigma() { return {}; }
  static MarginRule fixed(double rel) { return {Kind::fixed, rel}; }
};

Certificate check_bound_dominates(const TransportEstimate& empirical, const StabilityBound& theoretical,
                                  MarginRule rule = MarginRule::three_sigma());

// Evenly spaced points per axis over the ball of `radius` around `center` (d <= 2).
std::vector<Vec> ball_grid(const Vec& center, double radius, std::size_t per_axis);

}  // namespace stabilab
