#pragma once

#include "stabilab/model.hpp"
#include "stabilab/rng.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace stabilab {

struct SGDConfig {
  double eta = 0.1;
  std::size_t batch = 1;
  std::uint64_t k_max = 0;
  Vec theta0;
  std::uint64_t master_seed = 0;
};

enum class NoiseKind { none, gaussian_diag, laplace };

struct NoiseModel {
  NoiseKind kind = NoiseKind::none;
  Vec scale;  // variances for gaussian_diag, scales for laplace

  static NoiseModel none() { return {}; }
  static NoiseModel gaussian_diag(Vec variances);
  static NoiseModel laplace(Vec scales);

  bool active() const { return kind != NoiseKind::none; }
  double sigma2() const;  // E|xi|^2
  Vec draw(CounterRng& rng) const;
};

inline constexpr double kDivergenceNorm = 1e12;

// Omega_k: b distinct indices by partial Fisher-Yates keyed on (seed, replica, k).
std::vector<std::size_t> draw_minibatch(std::size_t n, std::size_t b, std::uint64_t master_seed,
                                        std::uint64_t replica_id, std::uint64_t k);

Vec step(const LossModel& loss, const Dataset& dataset, const Vec& theta,
         std::span<const std::size_t> omega, double eta, const std::optional<Vec>& xi = std::nullopt);

struct TrajectoryPair {
  std::uint64_t replica_id = 0;
  std::vector<std::uint64_t> checkpoints;
  std::vector<Vec> base;       // theta_k at each checkpoint
  std::vector<Vec> perturbed;  // hat theta_k at each checkpoint
  bool diverged = false;
  std::uint64_t diverged_at = 0;
  // Running hashes of the minibatches and noise each chain actually consumed.
  std::uint64_t base_stream_hash = 0;
  std::uint64_t perturbed_stream_hash = 0;
};

// Empty checkpoints means {config.k_max}.
TrajectoryPair run_coupled_pair(const LossModel& loss, const NeighborPair& pair, const SGDConfig& config,
                                const NoiseModel& noise, std::uint64_t replica_id,
                                std::span<const std::uint64_t> checkpoints = {});

struct CoupledEnsemble {
  std::vector<std::uint64_t> checkpoints;
  std::vector<TrajectoryPair> replicas;
  SGDConfig config;
  NoiseModel noise;

  std::size_t diverged_count() const;
  // (theta, hat theta) of the non-diverged replicas at checkpoint index ci.
  std::vector<std::pair<Vec, Vec>> pairs_at(std::size_t ci) const;
};

// threads = 0 uses the hardware concurrency. Output does not depend on it.
CoupledEnsemble run_ensemble(const LossModel& loss, const NeighborPair& pair, const SGDConfig& config,
                             const NoiseModel& noise, std::size_t R,
                             std::span<const std::uint64_t> checkpoints, unsigned threads = 0);

// |theta_k - tilde theta_k| for k = 0..k_max, both chains on the same data and randomness.
std::vector<double> run_contraction_pair(const LossModel& loss, const Dataset& dataset,
                                         const SGDConfig& config, const Vec& theta0_a, const Vec& theta0_b,
                                         const NoiseModel& noise, std::uint64_t replica_id = 0);

// Runs fn(i) for i in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

void write_trajectories_csv(std::ostream& out, const CoupledEnsemble& ensemble);

}  // namespace stabilab
