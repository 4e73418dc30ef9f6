#pragma once

#include "stabilab/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace stabilab {

struct DataPoint {
  Vec features;
  double label = 0.0;

  // Norm of the concatenated (features, label) vector.
  double norm() const;
  Vec concatenated() const;
};

enum class Generator { unit_fixed, sphere_uniform, gaussian_clipped };

std::string to_string(Generator g);
Generator generator_from_string(const std::string& name);

struct DatasetSpec {
  std::size_t n = 1;
  std::size_t d = 1;
  double radius = 1.0;
  double label_lo = -1.0;
  double label_hi = 1.0;
  Generator generator = Generator::sphere_uniform;

  bool operator==(const DatasetSpec&) const = default;
};

struct Dataset {
  std::vector<DataPoint> points;
  double radius = 1.0;
  std::size_t dim = 1;
  // Present when the points came from a generator; needed to redraw a point.
  std::optional<DatasetSpec> spec;
  std::uint64_t seed = 0;

  std::size_t size() const { return points.size(); }
  // Throws std::invalid_argument if n = 0, a dimension is off or a point leaves the ball.
  void validate() const;
};

struct NeighborPair {
  Dataset base;
  Dataset perturbed;
  std::size_t differing_index = 0;
};

enum class LossFamily { quadratic, ridge_quadratic, regularized_sine, scalar_power };

std::string to_string(LossFamily f);
LossFamily loss_family_from_string(const std::string& name);

struct LossModel {
  LossFamily family = LossFamily::quadratic;
  double ridge = 0.0;           // mu0
  double base_curvature = 1.0;  // m0
  double amplitude = 0.0;       // s
  double power = 2.0;           // p
  double scale = 1.0;           // mu of the power loss

  static LossModel quadratic();
  static LossModel ridge_quadratic(double mu0);
  static LossModel regularized_sine(double m0, double s);
  static LossModel scalar_power(double p, double mu);

  bool operator==(const LossModel&) const = default;
};

struct AssumptionConstants {
  double K1 = 0.0;
  double K2 = 0.0;
  double mu = 0.0;
  double m = 0.0;
  double K = 0.0;
  double p = 2.0;
  double D = 1.0;
  double E = 0.0;
};

double loss_value(const LossModel& loss, const Vec& theta, const DataPoint& x);
Vec grad(const LossModel& loss, const Vec& theta, const DataPoint& x);

Dataset make_synthetic_dataset(const DatasetSpec& spec, std::uint64_t seed);
DataPoint draw_point(const DatasetSpec& spec, std::uint64_t seed, std::uint64_t slot, bool replacement);

NeighborPair make_neighbor(const Dataset& base, std::size_t index, std::uint64_t seed);
NeighborPair make_neighbor(const Dataset& base, std::size_t index, const DataPoint& replacement);

AssumptionConstants derive_constants(const LossModel& loss, const Dataset& dataset);
// E is the max over both datasets of the pair.
AssumptionConstants derive_constants(const LossModel& loss, const NeighborPair& pair);

// max_i ||grad f(theta, x_i)|| over the data.
double max_grad_norm(const LossModel& loss, const Dataset& dataset, const Vec& theta);

struct AssumptionReport {
  std::size_t violations = 0;
  double worst_margin = kInf();
  std::size_t evaluations = 0;
  std::vector<std::string> checked;  // assumption labels evaluated for the family
};

AssumptionReport check_assumptions(const LossModel& loss, const Dataset& dataset,
                                   const AssumptionConstants& constants, std::size_t n_samples,
                                   std::uint64_t seed);

// Stationary point of the empirical risk by full-batch gradient descent.
Vec find_minimizer(const LossModel& loss, const Dataset& dataset, const Vec& theta0,
                   double tol = 1e-13, std::size_t max_iter = 200000);

void write_dataset_jsonl(std::ostream& out, const Dataset& dataset);
Dataset read_dataset_jsonl(std::istream& in);

}  // namespace stabilab
