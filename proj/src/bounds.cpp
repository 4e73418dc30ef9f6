#include "stabilab/bounds.hpp"

#include "stabilab/combinatorics.hpp"
#include "stabilab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stabilab {

namespace {

std::string num(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

// log(exp(a) + exp(b))
double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -kInf()) return a;
  return a + std::log1p(std::exp(b - a));
}

// log(1 - r^k) given log(1 - r), r in [0, 1).
double log_one_minus_power(double log_one_minus_r, Horizon k) {
  if (k.infinite) return 0.0;
  if (k.k == 0) return -kInf();
  const double u = std::exp(log_one_minus_r);
  const double kk = static_cast<double>(k.k);
  if (u < 1e-290) return std::log(kk) + log_one_minus_r;  // 1 - r^k = k(1 - r) to working precision
  return std::log(-std::expm1(kk * std::log1p(-u)));
}

// 1 - r^k for r in [0, 1).
double one_minus_power(double r, Horizon k) {
  if (k.infinite) return 1.0;
  if (k.k == 0) return 0.0;
  return -std::expm1(static_cast<double>(k.k) * std::log(r));
}

void require_step(double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("step size must be a nonnegative number");
}

void require_sizes(std::size_t b, std::size_t n) {
  if (n == 0) throw std::invalid_argument("n must be positive");
  if (b == 0 || b > n) throw std::invalid_argument("batch size must lie in [1, n]");
}

void gate(bool ok, const std::string& constraint, const std::string& detail) {
  if (!ok) throw InadmissibleError(constraint, detail);
}

// eta < min{1/a, a/(K1^2 + 64 D^2 K2^2)} shared by the strongly convex and dissipative regimes.
void gate_standard(double eta, double modulus, const AssumptionConstants& c, const char* name) {
  const std::string mod(name);
  gate(eta < 1.0 / modulus, "eta < 1/" + mod, "eta = " + num(eta) + ", 1/" + mod + " = " + num(1.0 / modulus));
  const double cap = modulus / (c.K1 * c.K1 + 64.0 * c.D * c.D * c.K2 * c.K2);
  gate(eta < cap, "eta < " + mod + "/(K1^2 + 64 D^2 K2^2)", "eta = " + num(eta) + ", bound = " + num(cap));
}

StabilityBound finish(StabilityBound b, double log_value) {
  b.log_value = log_value;
  b.value = std::exp(log_value);
  return b;
}

}  // namespace

std::string to_string(Regime r) {
  switch (r) {
    case Regime::quadratic: return "quadratic";
    case Regime::strongly_convex: return "strongly_convex";
    case Regime::nonconvex_noisy: return "nonconvex_noisy";
    case Regime::nonconvex_plain: return "nonconvex_plain";
    case Regime::subconvex_stationary: return "subconvex_stationary";
  }
  return "unknown";
}

Regime regime_from_string(const std::string& name) {
  for (Regime r : {Regime::quadratic, Regime::strongly_convex, Regime::nonconvex_noisy, Regime::nonconvex_plain,
                   Regime::subconvex_stationary})
    if (to_string(r) == name) return r;
  throw std::invalid_argument("unknown regime '" + name + "'");
}

void check_admissible(Regime regime, const AssumptionConstants& c, double eta) {
  switch (regime) {
    case Regime::quadratic: return;  // gated on rho, rho_hat instead
    case Regime::strongly_convex:
      gate(c.mu > 0.0, "mu > 0", "mu = " + num(c.mu));
      gate_standard(eta, c.mu, c, "mu");
      return;
    case Regime::nonconvex_noisy:
    case Regime::nonconvex_plain:
      gate(c.m > 0.0, "m > 0", "m = " + num(c.m));
      gate_standard(eta, c.m, c, "m");
      return;
    case Regime::subconvex_stationary: {
      gate(c.mu > 0.0, "mu > 0", "mu = " + num(c.mu));
      const double cap = c.mu / (c.K1 * c.K1 + std::pow(2.0, c.p + 4.0) * c.D * c.D * c.K2 * c.K2);
      gate(eta <= cap, "eta <= mu/(K1^2 + 2^(p+4) D^2 K2^2)", "eta = " + num(eta) + ", bound = " + num(cap));
      return;
    }
  }
}

double minibatch_spectral_norm(const Dataset& dataset, std::span<const std::size_t> omega, double eta) {
  const auto d = static_cast<Eigen::Index>(dataset.dim);
  Mat H = Mat::Zero(d, d);
  for (std::size_t i : omega) H.noalias() += dataset.points.at(i).features * dataset.points.at(i).features.transpose();
  const Mat M = Mat::Identity(d, d) - (eta / static_cast<double>(omega.size())) * H;
  if (d == 1) return std::abs(M(0, 0));
  Eigen::SelfAdjointEigenSolver<Mat> solver(M, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

RhoEstimate rho_quadratic(const Dataset& dataset, double eta, std::size_t b, SamplingMode mode, std::uint64_t seed) {
  require_step(eta);
  require_sizes(b, dataset.size());
  RunningStats rho, q;
  auto visit = [&](std::span<const std::size_t> omega) {
    rho.add(minibatch_spectral_norm(dataset, omega, eta));
    Vec s = Vec::Zero(static_cast<Eigen::Index>(dataset.dim));
    for (std::size_t i : omega) s += dataset.points[i].features * dataset.points[i].label;
    q.add(s.norm());
  };
  RhoEstimate out;
  if (mode.kind == SamplingMode::Kind::exact) {
    const auto count = binomial(dataset.size(), b);
    if (count > kEnumerationCap)
      throw std::invalid_argument("exact minibatch enumeration needs C(n,b) <= 20000 (got " +
                                  (count == std::numeric_limits<std::uint64_t>::max() ? std::string("overflow")
                                                                                       : std::to_string(count)) +
                                  "); use monte_carlo");
    for_each_subset(dataset.size(), b, visit);
  } else {
    if (mode.samples == 0) throw std::invalid_argument("monte_carlo mode needs at least one sample");
    for (std::size_t s = 0; s < mode.samples; ++s) visit(draw_minibatch(dataset.size(), b, seed, 0, s));
    out.exact = false;
    out.stderr_rho = rho.stderr_mean();
    out.stderr_q = q.stderr_mean();
  }
  out.rho = rho.mean;
  out.mean_q_norm = q.mean;
  out.batches = rho.count;
  return out;
}

double compute_kappa(double V0_integral, double L, double delta) {
  gate(delta < 1.0, "delta < 1", "delta = " + num(delta));
  return std::max(V0_integral, L / (1.0 - delta));
}

double perturbation_combine(const PerturbationInputs& in) {
  gate(in.rho < 1.0, "rho < 1", "rho = " + num(in.rho));
  if (in.C < 0 || in.rho < 0 || in.gamma < 0 || in.L < 0 || in.W0 < 0 || in.V0_integral < 1.0 || in.delta < 0)
    throw std::invalid_argument("perturbation inputs must be nonnegative with V0 >= 1");
  const double kappa = compute_kappa(in.V0_integral, in.L, in.delta);
  const double rho_n = in.n_steps.infinite ? 0.0 : std::pow(in.rho, static_cast<double>(in.n_steps.k));
  return in.C * (rho_n * in.W0 + one_minus_power(in.rho, in.n_steps) * in.gamma * kappa / (1.0 - in.rho));
}

StabilityBound bound_quadratic(const QuadraticBoundInputs& in, Horizon k) {
  require_step(in.eta);
  require_sizes(in.b, in.n);
  gate(in.rho < 1.0, "rho < 1", "rho = " + num(in.rho));
  gate(in.rho_hat < 1.0, "rho_hat < 1", "rho_hat = " + num(in.rho_hat));
  PerturbationInputs p;
  p.rho = in.rho;
  p.gamma = 2.0 * in.eta * in.D * in.D / static_cast<double>(in.n);
  p.delta = in.rho_hat;
  p.L = 1.0 - in.rho_hat + in.eta / static_cast<double>(in.b) * in.mean_q_norm;
  p.V0_integral = 1.0 + in.theta0_norm;
  p.n_steps = k;

  StabilityBound out;
  out.regime = Regime::quadratic;
  out.k = k;
  out.value = perturbation_combine(p);
  out.log_value = std::log(out.value);
  out.constants_used = {{"rho", in.rho},     {"rho_hat", in.rho_hat}, {"mean_q_norm", in.mean_q_norm},
                        {"D", in.D},         {"eta", in.eta},         {"gamma", p.gamma},
                        {"kappa", compute_kappa(p.V0_integral, p.L, p.delta)},
                        {"drift_L", p.L},    {"theta0_norm", in.theta0_norm}};
  return out;
}

StabilityBound bound_strongly_convex(const AssumptionConstants& c, double eta, std::size_t n, double theta0_norm,
                                     Horizon k, std::optional<double> minimizer_norm) {
  require_step(eta);
  require_sizes(1, n);
  gate(c.mu > 0.0, "mu > 0", "mu = " + num(c.mu));
  gate_standard(eta, c.mu, c, "mu");
  const double mu = c.mu, D = c.D, K1 = c.K1, K2 = c.K2;
  const double Q = minimizer_norm.value_or(minimizer_norm_strongly_convex(mu, c.E));
  const double growth = 1.0 - std::pow(1.0 - eta * mu / 2.0, k.infinite ? kInf() : static_cast<double>(k.k));
  const double first = 1.0 + 2.0 * theta0_norm * theta0_norm + 2.0 * Q * Q;
  const double second = 2.0 - eta / mu * K1 * K1 - 56.0 * eta / mu * D * D * K2 * K2 +
                        64.0 * eta / mu * D * D * K2 * K2 * Q * Q;
  const double value = 8.0 * D * K2 * growth / (static_cast<double>(n) * mu) * (2.0 * Q + 1.0) * std::max(first, second);

  StabilityBound out;
  out.regime = Regime::strongly_convex;
  out.k = k;
  out.value = value;
  out.log_value = std::log(value);
  out.constants_used = {{"K1", K1}, {"K2", K2}, {"mu", mu}, {"D", D}, {"E", c.E}, {"eta", eta},
                        {"minimizer_norm", Q}, {"lyapunov_max_first", first}, {"lyapunov_max_second", second}};
  return out;
}

double k0_constant(double m, double eta, double K1, double K2, double D, double theta_star_norm2, double K,
                   double sigma2) {
  for (double x : {m, eta, K1, K2, D, theta_star_norm2, K, sigma2})
    if (!(x >= 0.0)) throw std::invalid_argument("K0 inputs must be nonnegative");
  const double k0 = 2.0 * m - eta * K1 * K1 - 56.0 * eta * D * D * K2 * K2 +
                    64.0 * eta * D * D * K2 * K2 * theta_star_norm2 + 2.0 * K + eta * sigma2;
  if (!(k0 > 0.0)) throw std::domain_error("drift constant K0 = " + num(k0) + " is not positive");
  return k0;
}

std::vector<double> default_m_grid(double eta, double grad_sup, std::size_t count) {
  const double lo = eta * (grad_sup > 0.0 ? grad_sup : 1.0);
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i)
    grid[i] = count == 1 ? lo : lo * std::pow(1e3, static_cast<double>(i) / static_cast<double>(count - 1));
  grid.front() = lo;
  return grid;
}

EtaHat eta_hat_gaussian_log(const Vec& sigma_diag, double eta, double m, double K0, double epsilon, double K1,
                            double grad_sup, std::span<const double> M_grid) {
  if (sigma_diag.size() == 0 || (sigma_diag.array() <= 0.0).any() || (sigma_diag.array() >= 1.0).any())
    throw std::invalid_argument("Gaussian covariance must satisfy 0 < Sigma < I");
  if (!(eta > 0.0) || !(m > 0.0) || !(K0 > 0.0)) throw std::invalid_argument("eta, m, K0 must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  if (M_grid.empty()) throw std::invalid_argument("M grid is empty");
  const double r2 = 2.0 * K0 / m * (1.0 + epsilon) - 1.0;
  if (!(r2 > 0.0)) throw std::domain_error("sublevel radius (2K0/m)(1+eps) - 1 must be positive");
  const double r = std::sqrt(r2);
  const double log_det = (1.0 - sigma_diag.array()).log().sum();
  const double inv_norm = 1.0 / sigma_diag.minCoeff();
  const double a = 1.0 + K1 * eta;

  EtaHat best;
  double best_half = -kInf();
  for (double M : M_grid) {
    if (!(M >= eta * grad_sup * (1.0 - 1e-12)))
      throw std::invalid_argument("M grid entries must be >= eta * sup|grad f(theta*, x)|");
    const double shift = M / eta - grad_sup;
    // First branch: 1 - exp(t), t = -shift^2/2 - log det(I - Sigma)/2.
    const double t = -0.5 * shift * shift - 0.5 * log_det;
    if (t >= 0.0) {
      ++best.skipped;
      continue;
    }
    const double log_first = std::log(-std::expm1(t));
    const double log_second = -a * r / (2.0 * eta * eta) * inv_norm * (a * r + 2.0 * (M + eta * grad_sup));
    const double half = std::min(log_first, log_second);
    if (half > best_half) {
      best_half = half;
      best.argmax_M = M;
      best.log_first = log_first;
      best.log_second = log_second;
    }
  }
  if (best_half == -kInf()) throw std::domain_error("no M in the grid gives a positive minorization constant");
  best.log_eta_hat = 2.0 * best_half;
  return best;
}

double eta_bar(double m, double eta, double epsilon, double eta_hat) {
  if (eta > 1.0) throw std::invalid_argument("eta_bar needs eta <= 1");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  if (!(eta_hat >= 0.0 && eta_hat <= 1.0)) throw std::invalid_argument("eta_hat must lie in (0, 1)");
  return 1.0 - m * eta * epsilon * (1.0 + epsilon) * eta_hat / (4.0 * m + 2.0 * (1.0 + epsilon) * eta_hat);
}

NoisyRegimeConstants NoisyRegimeConstants::from_eta_hat(double m, double eta, double epsilon, double log_eta_hat,
                                                        double K0, double M) {
  if (eta > 1.0) throw std::invalid_argument("eta_bar needs eta <= 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  if (!(log_eta_hat <= 0.0)) throw std::invalid_argument("eta_hat must lie in (0, 1)");
  if (!(m > 0.0 && eta > 0.0 && K0 > 0.0)) throw std::invalid_argument("m, eta, K0 must be positive");
  const double eta_hat = std::exp(log_eta_hat);
  NoisyRegimeConstants nc;
  nc.K0 = K0;
  nc.eta_hat_log = log_eta_hat;
  nc.eta0 = eta_hat / 2.0;
  nc.gamma0 = 1.0 - m * eta * epsilon / 2.0;
  nc.log_psi = log_eta_hat - std::log(2.0 * eta * K0);
  nc.psi = std::exp(nc.log_psi);
  nc.eta_bar = stabilab::eta_bar(m, eta, epsilon, eta_hat);
  nc.log_one_minus_eta_bar = std::log(m * eta * epsilon * (1.0 + epsilon)) + log_eta_hat -
                             std::log(4.0 * m + 2.0 * (1.0 + epsilon) * eta_hat);
  nc.epsilon = epsilon;
  nc.R = 2.0 * K0 / m * (1.0 + epsilon);
  nc.M = M;
  return nc;
}

NoisyRegimeConstants NoisyRegimeConstants::explicit_values(double eta_bar_value, double psi) {
  if (!(psi > 0.0)) throw std::invalid_argument("psi must be positive");
  NoisyRegimeConstants nc;
  nc.eta_bar = eta_bar_value;
  nc.log_one_minus_eta_bar = eta_bar_value < 1.0 ? std::log1p(-eta_bar_value) : -kInf();
  nc.psi = psi;
  nc.log_psi = std::log(psi);
  return nc;
}

StabilityBound bound_nonconvex_noisy(const AssumptionConstants& c, double eta, double sigma2, std::size_t b,
                                     std::size_t n, double theta0_norm, Horizon k, const NoisyRegimeConstants& nc,
                                     std::optional<double> minimizer_norm) {
  require_step(eta);
  require_sizes(b, n);
  gate(c.m > 0.0, "m > 0", "m = " + num(c.m));
  gate_standard(eta, c.m, c, "m");
  // eta_bar itself may round to 1; only log(1 - eta_bar) has to be finite.
  gate(std::isfinite(nc.log_one_minus_eta_bar), "eta_bar < 1",
       "log(1 - eta_bar) = " + num(nc.log_one_minus_eta_bar));
  const double m = c.m, D = c.D, K1 = c.K1, K2 = c.K2, E = c.E, K = c.K;
  const double Q = minimizer_norm.value_or(minimizer_norm_dissipative(m, K, E));
  const double lp = nc.log_psi;
  const double log1p_psi = log_add(0.0, lp);

  const double log_prefactor =
      log_one_minus_power(nc.log_one_minus_eta_bar, k) - std::log(2.0) - 0.5 * (lp + log1p_psi) - nc.log_one_minus_eta_bar;

  const double inner = 1.0 + eta * eta * sigma2 + 16.0 * (1.0 + 2.0 * eta * eta * K1 * K1) * Q * Q +
                       4.0 * eta * eta * (2.0 * E * E + 2.0 * K1 * K1 * Q * Q);
  const double log_gap_a = lp + std::log(4.0 + 8.0 * eta * eta * K1 * K1);
  const double log_gap_b = log_add(0.0, lp + std::log(inner));
  const double log_gap = std::log(2.0 * static_cast<double>(b) / static_cast<double>(n)) + std::max(log_gap_a, log_gap_b);

  const double lyap_a = 1.0 + 2.0 * theta0_norm * theta0_norm + 2.0 * Q * Q;
  const double lyap_b = 2.0 - eta / m * K1 * K1 - 56.0 * eta / m * D * D * K2 * K2 +
                        64.0 * eta / m * D * D * K2 * K2 * Q * Q + 2.0 * K / m + eta / m * sigma2;
  const double lyap = std::max(lyap_a, lyap_b);

  StabilityBound out;
  out.regime = Regime::nonconvex_noisy;
  out.k = k;
  out.constants_used = {{"K1", K1},
                        {"K2", K2},
                        {"m", m},
                        {"K", K},
                        {"D", D},
                        {"E", E},
                        {"eta", eta},
                        {"sigma2", sigma2},
                        {"minimizer_norm", Q},
                        {"K0", nc.K0},
                        {"log_eta_hat", nc.eta_hat_log},
                        {"eta_bar", nc.eta_bar},
                        {"log_one_minus_eta_bar", nc.log_one_minus_eta_bar},
                        {"log_psi", lp},
                        {"epsilon", nc.epsilon},
                        {"R", nc.R},
                        {"M", nc.M},
                        {"log_prefactor", log_prefactor},
                        {"log_gap_factor", log_gap},
                        {"lyapunov_factor", lyap}};
  return finish(out, log_prefactor + log_gap + std::log(lyap));
}

StabilityBound bound_nonconvex_plain(const AssumptionConstants& c, double eta, std::size_t b, std::size_t n,
                                     double theta0_norm, Horizon k, std::optional<double> minimizer_norm) {
  require_step(eta);
  require_sizes(b, n);
  gate(c.m > 0.0, "m > 0", "m = " + num(c.m));
  gate_standard(eta, c.m, c, "m");
  const double m = c.m, D = c.D, K1 = c.K1, K2 = c.K2, K = c.K;
  const double Q = minimizer_norm.value_or(minimizer_norm_dissipative(m, K, c.E));
  const double B = 4.0 * theta0_norm * theta0_norm + 4.0 * Q * Q + 4.0 - 2.0 * eta / m * K1 * K1 -
                   112.0 * eta / m * D * D * K2 * K2 + 128.0 * eta / m * D * D * K2 * K2 * Q * Q + 4.0 * K / m +
                   2.0 * Q * Q;
  const double nn = static_cast<double>(n), bb = static_cast<double>(b);
  const double t1 = 4.0 * D * D * K2 * K2 * eta * (8.0 * B + 2.0) / (bb * nn * m);
  const double t2 = 4.0 * K2 * D * (1.0 + K1 * eta) / (nn * m) * (1.0 + 5.0 * B);
  const double t3 = 2.0 * K / m;
  const double growth = one_minus_power(1.0 - eta * m, k);

  StabilityBound out;
  out.regime = Regime::nonconvex_plain;
  out.k = k;
  out.order = 2.0;
  out.value = growth * (t1 + t2 + t3);
  out.log_value = std::log(out.value);
  out.constants_used = {{"K1", K1}, {"K2", K2}, {"m", m},   {"K", K},   {"D", D},   {"E", c.E},
                        {"eta", eta}, {"minimizer_norm", Q}, {"B", B}, {"batch_term", t1},
                        {"data_term", t2}, {"persistent_term", t3}};
  return out;
}

StabilityBound bound_subconvex(const AssumptionConstants& c, double eta, std::size_t b, std::size_t n) {
  require_step(eta);
  require_sizes(b, n);
  const double p = c.p;
  if (!(p > 1.0 && p < 2.0)) throw std::invalid_argument("subconvex regime needs p in (1, 2)");
  gate(c.mu > 0.0, "mu > 0", "mu = " + num(c.mu));
  const double mu = c.mu, D = c.D, K1 = c.K1, K2 = c.K2;
  const double cap = mu / (K1 * K1 + std::pow(2.0, p + 4.0) * D * D * K2 * K2);
  gate(eta <= cap, "eta <= mu/(K1^2 + 2^(p+4) D^2 K2^2)", "eta = " + num(eta) + ", bound = " + num(cap));

  const double t = std::pow(c.E / mu, p / (p - 1.0));
  const double DK2sq = D * D * K2 * K2;
  const double C2 = 4.0 * DK2sq * eta / mu *
                    (std::pow(2.0, p + 2.0) * (8.0 * eta / mu * DK2sq * (std::pow(2.0, p + 1.0) * t + 5.0)) +
                     std::pow(2.0, p + 2.0) * t + 10.0);
  const double C3 = 32.0 * D * DK2sq * K2 * eta / (mu * mu) * (1.0 + K1 * eta) * 10.0 * std::pow(2.0, p - 1.0) *
                        (std::pow(2.0, p + 1.0) * t + 5.0) +
                    4.0 * D * K2 / mu * (1.0 + K1 * eta) * (10.0 * std::pow(2.0, p - 1.0) * t + 5.0);
  const double bn = static_cast<double>(b) * static_cast<double>(n);

  StabilityBound out;
  out.regime = Regime::subconvex_stationary;
  out.k = Horizon::unbounded();
  out.order = p;
  out.value = C2 / (bn * mu) + C3 / static_cast<double>(n);
  out.log_value = std::log(out.value);
  out.constants_used = {{"K1", K1}, {"K2", K2}, {"mu", mu}, {"p", p}, {"D", D}, {"E", c.E}, {"eta", eta},
                        {"C2", C2}, {"C3", C3}, {"statement_reading", C2 / bn + C3 / static_cast<double>(n)}};
  return out;
}

double minimizer_norm_strongly_convex(double mu, double E) {
  if (!(mu > 0.0)) throw std::invalid_argument("zero strong convexity modulus");
  return E / mu;
}

double minimizer_norm_dissipative(double m, double K, double E) {
  if (!(m > 0.0)) throw std::invalid_argument("zero dissipativity modulus");
  return (E + std::sqrt(E * E + 4.0 * m * K)) / (2.0 * m);
}

double minimizer_norm_subconvex(double mu, double p, double E) {
  if (!(mu > 0.0)) throw std::invalid_argument("zero sub-strong convexity modulus");
  if (!(p > 1.0)) throw std::invalid_argument("power must exceed 1");
  return std::pow(E / mu, 1.0 / (p - 1.0));
}

double generalization_from_stability(double L_lipschitz, double w1) {
  if (!(L_lipschitz >= 0.0) || !(w1 >= 0.0)) throw std::invalid_argument("Lipschitz constant and W1 must be nonnegative");
  return L_lipschitz * w1;
}

}  // namespace stabilab
