#include "stabilab/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace stabilab {

NoiseModel NoiseModel::gaussian_diag(Vec variances) {
  if (variances.size() == 0 || (variances.array() < 0.0).any())
    throw std::invalid_argument("gaussian noise needs nonnegative variances");
  return {NoiseKind::gaussian_diag, std::move(variances)};
}

NoiseModel NoiseModel::laplace(Vec scales) {
  if (scales.size() == 0 || (scales.array() < 0.0).any())
    throw std::invalid_argument("laplace noise needs nonnegative scales");
  return {NoiseKind::laplace, std::move(scales)};
}

double NoiseModel::sigma2() const {
  switch (kind) {
    case NoiseKind::none: return 0.0;
    case NoiseKind::gaussian_diag: return scale.sum();
    case NoiseKind::laplace: return 2.0 * scale.squaredNorm();
  }
  return 0.0;
}

Vec NoiseModel::draw(CounterRng& rng) const {
  Vec xi(scale.size());
  for (Eigen::Index j = 0; j < scale.size(); ++j) {
    if (kind == NoiseKind::gaussian_diag)
      xi(j) = std::sqrt(scale(j)) * rng.normal();
    else
      xi(j) = scale(j) * rng.laplace();
  }
  return xi;
}

std::vector<std::size_t> draw_minibatch(std::size_t n, std::size_t b, std::uint64_t master_seed,
                                        std::uint64_t replica_id, std::uint64_t k) {
  if (b == 0 || b > n) throw std::invalid_argument("minibatch size must lie in [1, n]");
  CounterRng rng(master_seed, replica_id, StreamTag::minibatch, k);
  std::vector<std::size_t> omega(b);
  if (b * b <= 4 * n) {
    // Sparse variant: only displaced slots are tracked.
    std::vector<std::pair<std::size_t, std::size_t>> moved;
    auto value = [&](std::size_t slot) {
      for (const auto& [s, v] : moved)
        if (s == slot) return v;
      return slot;
    };
    auto assign = [&](std::size_t slot, std::size_t v) {
      for (auto& [s, old] : moved)
        if (s == slot) {
          old = v;
          return;
        }
      moved.emplace_back(slot, v);
    };
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t j = i + rng.below(n - i);
      const std::size_t vi = value(i), vj = value(j);
      omega[i] = vj;
      assign(j, vi);
      assign(i, vj);
    }
  } else {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t j = i + rng.below(n - i);
      std::swap(perm[i], perm[j]);
      omega[i] = perm[i];
    }
  }
  return omega;
}

Vec step(const LossModel& loss, const Dataset& dataset, const Vec& theta,
         std::span<const std::size_t> omega, double eta, const std::optional<Vec>& xi) {
  if (omega.empty()) throw std::invalid_argument("empty minibatch");
  Vec g = Vec::Zero(theta.size());
  for (std::size_t i : omega) {
    if (i >= dataset.size()) throw std::out_of_range("minibatch index out of range");
    g += grad(loss, theta, dataset.points[i]);
  }
  Vec next = theta - (eta / static_cast<double>(omega.size())) * g;
  if (xi) {
    if (xi->size() != theta.size()) throw std::invalid_argument("noise dimension does not match theta");
    next += eta * *xi;
  }
  return next;
}

namespace {

std::uint64_t absorb(std::uint64_t h, std::span<const std::size_t> omega, const std::optional<Vec>& xi) {
  for (std::size_t i : omega) h = hash_combine(h, i);
  if (xi)
    for (Eigen::Index j = 0; j < xi->size(); ++j) h = hash_combine(h, std::bit_cast<std::uint64_t>((*xi)(j)));
  return h;
}

std::vector<std::uint64_t> resolve_checkpoints(std::span<const std::uint64_t> checkpoints, std::uint64_t k_max) {
  std::vector<std::uint64_t> cps(checkpoints.begin(), checkpoints.end());
  if (cps.empty()) cps.push_back(k_max);
  if (!std::is_sorted(cps.begin(), cps.end())) throw std::invalid_argument("checkpoints must be sorted");
  if (cps.back() > k_max) throw std::invalid_argument("checkpoint beyond k_max");
  return cps;
}

Vec nan_vec(Eigen::Index d) { return Vec::Constant(d, std::numeric_limits<double>::quiet_NaN()); }

}  // namespace

TrajectoryPair run_coupled_pair(const LossModel& loss, const NeighborPair& pair, const SGDConfig& config,
                                const NoiseModel& noise, std::uint64_t replica_id,
                                std::span<const std::uint64_t> checkpoints) {
  const std::size_t n = pair.base.size();
  if (pair.perturbed.size() != n) throw std::invalid_argument("neighbor datasets differ in size");
  if (noise.active() && noise.scale.size() != config.theta0.size())
    throw std::invalid_argument("noise dimension does not match theta");

  TrajectoryPair out;
  out.replica_id = replica_id;
  out.checkpoints = resolve_checkpoints(checkpoints, config.k_max);
  const std::uint64_t horizon = out.checkpoints.back();

  Vec theta = config.theta0;
  Vec theta_hat = config.theta0;
  std::size_t next_cp = 0;
  auto record = [&](std::uint64_t k) {
    while (next_cp < out.checkpoints.size() && out.checkpoints[next_cp] == k) {
      out.base.push_back(theta);
      out.perturbed.push_back(theta_hat);
      ++next_cp;
    }
  };
  record(0);
  for (std::uint64_t k = 1; k <= horizon; ++k) {
    const auto omega = draw_minibatch(n, config.batch, config.master_seed, replica_id, k);
    std::optional<Vec> xi;
    if (noise.active()) {
      CounterRng rng(config.master_seed, replica_id, StreamTag::noise, k);
      xi = noise.draw(rng);
    }
    theta = step(loss, pair.base, theta, omega, config.eta, xi);
    out.base_stream_hash = absorb(out.base_stream_hash, omega, xi);
    theta_hat = step(loss, pair.perturbed, theta_hat, omega, config.eta, xi);
    out.perturbed_stream_hash = absorb(out.perturbed_stream_hash, omega, xi);

    if (!(theta.norm() <= kDivergenceNorm) || !(theta_hat.norm() <= kDivergenceNorm)) {
      out.diverged = true;
      out.diverged_at = k;
      while (out.base.size() < out.checkpoints.size()) {
        out.base.push_back(nan_vec(theta.size()));
        out.perturbed.push_back(nan_vec(theta.size()));
      }
      return out;
    }
    record(k);
  }
  return out;
}

std::size_t CoupledEnsemble::diverged_count() const {
  return static_cast<std::size_t>(
      std::count_if(replicas.begin(), replicas.end(), [](const auto& r) { return r.diverged; }));
}

std::vector<std::pair<Vec, Vec>> CoupledEnsemble::pairs_at(std::size_t ci) const {
  std::vector<std::pair<Vec, Vec>> out;
  out.reserve(replicas.size());
  for (const auto& r : replicas)
    if (!r.diverged) out.emplace_back(r.base.at(ci), r.perturbed.at(ci));
  return out;
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

CoupledEnsemble run_ensemble(const LossModel& loss, const NeighborPair& pair, const SGDConfig& config,
                             const NoiseModel& noise, std::size_t R,
                             std::span<const std::uint64_t> checkpoints, unsigned threads) {
  if (R == 0) throw std::invalid_argument("ensemble needs R >= 1");
  CoupledEnsemble ens;
  ens.checkpoints = resolve_checkpoints(checkpoints, config.k_max);
  ens.config = config;
  ens.noise = noise;
  ens.replicas.resize(R);
  parallel_for(R, threads, [&](std::size_t r) {
    ens.replicas[r] = run_coupled_pair(loss, pair, config, noise, r, ens.checkpoints);
  });
  return ens;
}

std::vector<double> run_contraction_pair(const LossModel& loss, const Dataset& dataset,
                                         const SGDConfig& config, const Vec& theta0_a, const Vec& theta0_b,
                                         const NoiseModel& noise, std::uint64_t replica_id) {
  if (theta0_a.size() != theta0_b.size()) throw std::invalid_argument("initial points differ in dimension");
  std::vector<double> dist;
  dist.reserve(config.k_max + 1);
  Vec a = theta0_a, b = theta0_b;
  dist.push_back((a - b).norm());
  for (std::uint64_t k = 1; k <= config.k_max; ++k) {
    const auto omega = draw_minibatch(dataset.size(), config.batch, config.master_seed, replica_id, k);
    std::optional<Vec> xi;
    if (noise.active()) {
      CounterRng rng(config.master_seed, replica_id, StreamTag::noise, k);
      xi = noise.draw(rng);
    }
    a = step(loss, dataset, a, omega, config.eta, xi);
    b = step(loss, dataset, b, omega, config.eta, xi);
    if (!(a.norm() <= kDivergenceNorm) || !(b.norm() <= kDivergenceNorm)) {
      dist.resize(config.k_max + 1, std::numeric_limits<double>::quiet_NaN());
      return dist;
    }
    dist.push_back((a - b).norm());
  }
  return dist;
}

void write_trajectories_csv(std::ostream& out, const CoupledEnsemble& ensemble) {
  const Eigen::Index d = ensemble.config.theta0.size();
  out << "replica,k,chain";
  for (Eigen::Index j = 0; j < d; ++j) out << ",theta_" << j;
  out << '\n';
  char buf[40];
  for (const auto& r : ensemble.replicas) {
    for (std::size_t c = 0; c < r.checkpoints.size(); ++c) {
      for (int chain = 0; chain < 2; ++chain) {
        const Vec& th = chain == 0 ? r.base[c] : r.perturbed[c];
        out << r.replica_id << ',' << r.checkpoints[c] << ',' << (chain == 0 ? "base" : "perturbed");
        for (Eigen::Index j = 0; j < d; ++j) {
          std::snprintf(buf, sizeof buf, "%.17g", th(j));
          out << ',' << buf;
        }
        out << '\n';
      }
    }
  }
}

}  // namespace stabilab
