#pragma once

#include "stabilab/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stabilab {

// One sample per row.
template <typename Scalar>
using SampleCloud = Matrix<Scalar>;

enum class TransportMethod { exact_1d, assignment, coupled };

std::string to_string(TransportMethod m);

struct TransportEstimate {
  double value = 0.0;
  double p = 1.0;
  TransportMethod method = TransportMethod::coupled;
  std::size_t n_samples = 0;
  // Standard error of the mean of |theta - hat theta|^p; set for coupled estimates.
  double stderr_pow = 0.0;
};

inline constexpr std::size_t kAssignmentCap = 1024;

namespace detail {

template <typename Scalar>
Scalar pow_cost(Scalar dist, double p) {
  if (p == 1.0) return dist;
  if (p == 2.0) return dist * dist;
  return std::pow(dist, static_cast<Scalar>(p));
}

template <typename Derived>
void check_cloud(const Eigen::MatrixBase<Derived>& A) {
  if (A.rows() == 0) throw std::invalid_argument("sample cloud is empty");
  if (!A.allFinite()) throw std::invalid_argument("sample cloud has non-finite entries");
}

inline void check_p(double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw std::invalid_argument("transport order p must be >= 1");
}

}  // namespace detail

// Shortest augmenting path Hungarian method, O(N^3). Returns the column assigned to each row.
template <typename Scalar>
std::vector<Eigen::Index> min_cost_assignment(const Matrix<Scalar>& cost) {
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) throw std::invalid_argument("assignment needs a square cost matrix");
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  std::vector<Scalar> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
  std::vector<Eigen::Index> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (Eigen::Index i = 1; i <= n; ++i) {
    match[0] = i;
    Eigen::Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Eigen::Index i0 = match[j0];
      Scalar delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const Scalar cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Eigen::Index> row_to_col(n);
  for (Eigen::Index j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

template <typename DA, typename DB>
TransportEstimate wasserstein_exact_1d(double p, const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DB>& B) {
  using Scalar = typename DA::Scalar;
  detail::check_p(p);
  detail::check_cloud(A);
  detail::check_cloud(B);
  if (A.cols() != 1 || B.cols() != 1) throw std::invalid_argument("exact 1-D transport needs d = 1");
  if (A.rows() != B.rows()) throw std::invalid_argument("sample clouds differ in size");
  std::vector<Scalar> a(A.col(0).begin(), A.col(0).end()), b(B.col(0).begin(), B.col(0).end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  Scalar total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) total += detail::pow_cost<Scalar>(std::abs(a[i] - b[i]), p);
  const auto N = static_cast<Scalar>(a.size());
  return {static_cast<double>(std::pow(total / N, static_cast<Scalar>(1.0 / p))), p, TransportMethod::exact_1d,
          a.size(), 0.0};
}

template <typename DA, typename DB>
TransportEstimate wasserstein_assignment(double p, const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DB>& B,
                                         std::size_t cap = kAssignmentCap) {
  using Scalar = typename DA::Scalar;
  detail::check_p(p);
  detail::check_cloud(A);
  detail::check_cloud(B);
  if (A.rows() != B.rows()) throw std::invalid_argument("sample clouds differ in size");
  if (A.cols() != B.cols()) throw std::invalid_argument("sample clouds differ in dimension");
  const Eigen::Index N = A.rows();
  if (static_cast<std::size_t>(N) > cap)
    throw std::length_error("assignment estimator limited to " + std::to_string(cap) + " samples per cloud (got " +
                            std::to_string(N) + "); subsample the clouds first");
  Matrix<Scalar> cost(N, N);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < N; ++j) cost(i, j) = detail::pow_cost<Scalar>((A.row(i) - B.row(j)).norm(), p);
  const auto match = min_cost_assignment(cost);
  // Matched costs are summed in sorted order so swapping A and B gives the same value.
  std::vector<Scalar> matched(N);
  Scalar identity = 0;
  for (Eigen::Index i = 0; i < N; ++i) {
    matched[i] = cost(i, match[i]);
    identity += cost(i, i);
  }
  std::sort(matched.begin(), matched.end());
  Scalar best = 0;
  for (Scalar c : matched) best += c;
  // The identity pairing is itself a matching; this only absorbs solver rounding.
  best = std::min(best, identity);
  return {static_cast<double>(std::pow(best / static_cast<Scalar>(N), static_cast<Scalar>(1.0 / p))), p,
          TransportMethod::assignment, static_cast<std::size_t>(N), 0.0};
}

// Row i of A is coupled with row i of B.
template <typename DA, typename DB>
TransportEstimate coupled_upper_bound(double p, const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DB>& B) {
  using Scalar = typename DA::Scalar;
  detail::check_p(p);
  detail::check_cloud(A);
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw std::invalid_argument("paired clouds differ in shape");
  const Eigen::Index N = A.rows();
  std::vector<Scalar> c(N);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < N; ++i) {
    c[i] = detail::pow_cost<Scalar>((A.row(i) - B.row(i)).norm(), p);
    total += c[i];
  }
  const Scalar mean = total / static_cast<Scalar>(N);
  double se = 0.0;
  if (N > 1) {
    Scalar ss = 0;
    for (Scalar ci : c) ss += (ci - mean) * (ci - mean);
    se = std::sqrt(static_cast<double>(ss) / static_cast<double>(N - 1) / static_cast<double>(N));
  }
  return {static_cast<double>(std::pow(mean, static_cast<Scalar>(1.0 / p))), p, TransportMethod::coupled,
          static_cast<std::size_t>(N), se};
}

// Stacks pair members into two row-aligned clouds.
std::pair<SampleCloud<double>, SampleCloud<double>> split_pairs(const std::vector<std::pair<Vec, Vec>>& pairs);

TransportEstimate coupled_upper_bound(double p, const std::vector<std::pair<Vec, Vec>>& pairs);

}  // namespace stabilab
