#include "stabilab/transport.hpp"

namespace stabilab {

std::string to_string(TransportMethod m) {
  switch (m) {
    case TransportMethod::exact_1d: return "exact_1d";
    case TransportMethod::assignment: return "assignment";
    case TransportMethod::coupled: return "coupled";
  }
  return "unknown";
}

std::pair<SampleCloud<double>, SampleCloud<double>> split_pairs(const std::vector<std::pair<Vec, Vec>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("no pairs to split");
  const Eigen::Index d = pairs.front().first.size();
  SampleCloud<double> A(static_cast<Eigen::Index>(pairs.size()), d), B(A.rows(), d);
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    if (pairs[r].first.size() != d || pairs[r].second.size() != d)
      throw std::invalid_argument("pair members differ in dimension");
    A.row(static_cast<Eigen::Index>(r)) = pairs[r].first.transpose();
    B.row(static_cast<Eigen::Index>(r)) = pairs[r].second.transpose();
  }
  return {std::move(A), std::move(B)};
}

TransportEstimate coupled_upper_bound(double p, const std::vector<std::pair<Vec, Vec>>& pairs) {
  const auto [A, B] = split_pairs(pairs);
  return coupled_upper_bound(p, A, B);
}

}  // namespace stabilab
