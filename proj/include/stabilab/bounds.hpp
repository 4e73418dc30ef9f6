#pragma once

#include "stabilab/model.hpp"
#include "stabilab/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stabilab {

enum class Regime { quadratic, strongly_convex, nonconvex_noisy, nonconvex_plain, subconvex_stationary };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& name);

// Thrown when a step size or rate falls outside a theorem's range; names the inequality.
class InadmissibleError : public std::domain_error {
 public:
  InadmissibleError(std::string constraint, const std::string& detail)
      : std::domain_error("inadmissible: requires " + constraint + " (" + detail + ")"),
        constraint_(std::move(constraint)) {}
  const std::string& constraint() const { return constraint_; }

 private:
  std::string constraint_;
};

struct StabilityBound {
  Regime regime = Regime::quadratic;
  Horizon k;
  // Bounds W_q^q with q = order: 1 for W1, 2 for W2^2, p for W_p^p.
  double order = 1.0;
  double value = 0.0;
  double log_value = -kInf();
  std::map<std::string, double> constants_used;
  bool admissible = true;
};

struct SamplingMode {
  enum class Kind { exact, monte_carlo } kind = Kind::exact;
  std::size_t samples = 0;

  static SamplingMode exact() { return {}; }
  static SamplingMode monte_carlo(std::size_t n) { return {Kind::monte_carlo, n}; }
};

struct RhoEstimate {
  double rho = 0.0;
  double stderr_rho = 0.0;
  double mean_q_norm = 0.0;  // E|sum_{i in Omega} a_i y_i|
  double stderr_q = 0.0;
  std::size_t batches = 0;
  bool exact = true;
};

// E|I - (eta/b) H_1| and E|q_1| over minibatches of the dataset.
RhoEstimate rho_quadratic(const Dataset& dataset, double eta, std::size_t b, SamplingMode mode, std::uint64_t seed = 0);

// Largest singular value of I - (eta/b) sum_{i in omega} a_i a_i^T.
double minibatch_spectral_norm(const Dataset& dataset, std::span<const std::size_t> omega, double eta);

struct QuadraticBoundInputs {
  double rho = 0.0;
  double rho_hat = 0.0;
  double mean_q_norm = 0.0;
  double D = 1.0;
  double eta = 0.1;
  std::size_t b = 1;
  std::size_t n = 1;
  double theta0_norm = 0.0;
};

// Throws InadmissibleError naming the first violated step-size condition of the regime.
void check_admissible(Regime regime, const AssumptionConstants& c, double eta);

StabilityBound bound_quadratic(const QuadraticBoundInputs& in, Horizon k);

StabilityBound bound_strongly_convex(const AssumptionConstants& c, double eta, std::size_t n, double theta0_norm,
                                     Horizon k, std::optional<double> minimizer_norm = std::nullopt);

double k0_constant(double m, double eta, double K1, double K2, double D, double theta_star_norm2, double K,
                   double sigma2);

struct EtaHat {
  double log_eta_hat = -kInf();
  double argmax_M = 0.0;
  double log_first = 0.0;   // log of the first branch at argmax_M
  double log_second = 0.0;  // log of the second branch at argmax_M
  std::size_t skipped = 0;  // grid points where the first branch is not positive
};

// 32 log-spaced values in [eta*g, 1e3*eta*g]; g = 0 is floored to 1.
std::vector<double> default_m_grid(double eta, double grad_sup, std::size_t count = 32);

EtaHat eta_hat_gaussian_log(const Vec& sigma_diag, double eta, double m, double K0, double epsilon, double K1,
                            double grad_sup, std::span<const double> M_grid);

struct NoisyRegimeConstants {
  double K0 = 0.0;
  double eta_hat_log = -kInf();
  double eta0 = 0.0;
  double gamma0 = 0.0;
  double psi = 0.0;
  double log_psi = -kInf();
  double eta_bar = 1.0;
  double log_one_minus_eta_bar = -kInf();
  double epsilon = 0.0;
  double R = 0.0;
  double M = 0.0;

  // Everything implied by (eta_hat, K0) through the displayed eta_bar formula.
  static NoisyRegimeConstants from_eta_hat(double m, double eta, double epsilon, double log_eta_hat, double K0,
                                           double M = 0.0);
  // Direct (eta_bar, psi) inputs.
  static NoisyRegimeConstants explicit_values(double eta_bar, double psi);
};

double eta_bar(double m, double eta, double epsilon, double eta_hat);

StabilityBound bound_nonconvex_noisy(const AssumptionConstants& c, double eta, double sigma2, std::size_t b,
                                     std::size_t n, double theta0_norm, Horizon k, const NoisyRegimeConstants& nc,
                                     std::optional<double> minimizer_norm = std::nullopt);

StabilityBound bound_nonconvex_plain(const AssumptionConstants& c, double eta, std::size_t b, std::size_t n,
                                     double theta0_norm, Horizon k,
                                     std::optional<double> minimizer_norm = std::nullopt);

StabilityBound bound_subconvex(const AssumptionConstants& c, double eta, std::size_t b, std::size_t n);

double minimizer_norm_strongly_convex(double mu, double E);
double minimizer_norm_dissipative(double m, double K, double E);
double minimizer_norm_subconvex(double mu, double p, double E);

struct PerturbationInputs {
  double C = 1.0;
  double rho = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
  double L = 0.0;
  double V0_integral = 1.0;
  double W0 = 0.0;
  Horizon n_steps;
};

double compute_kappa(double V0_integral, double L, double delta);
double perturbation_combine(const PerturbationInputs& in);

double generalization_from_stability(double L_lipschitz, double w1);

}  // namespace stabilab
