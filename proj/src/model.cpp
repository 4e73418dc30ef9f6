#include "stabilab/model.hpp"

#include "stabilab/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace stabilab {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

void check_dims(const LossModel& loss, const Vec& theta, const DataPoint& x) {
  require(theta.size() == x.features.size(), "theta dimension does not match the data dimension");
  if (loss.family == LossFamily::scalar_power) require(theta.size() == 1, "scalar_power needs d = 1");
}

double signed_power(double u, double q) {
  if (u == 0.0) return 0.0;
  return std::copysign(std::pow(std::abs(u), q), u);
}

// Shrink onto the closed ball; the loop absorbs the last-ulp rounding of the rescale.
void clip_to_radius(DataPoint& x, double radius) {
  const double r = x.norm();
  if (r <= radius) return;
  const double s = radius / r;
  x.features *= s;
  x.label *= s;
  const double shrink = std::nextafter(1.0, 0.0);
  while (x.norm() > radius) {
    x.features *= shrink;
    x.label *= shrink;
  }
}

void validate_spec(const DatasetSpec& spec) {
  require(spec.n >= 1, "dataset needs n >= 1");
  require(spec.d >= 1, "dataset needs d >= 1");
  require(spec.radius > 0.0 && std::isfinite(spec.radius), "dataset radius must be positive");
  require(spec.label_lo <= spec.label_hi, "label range must satisfy lo <= hi");
  if (spec.generator == Generator::unit_fixed)
    require(spec.radius >= std::sqrt(2.0), "unit_fixed points have norm sqrt(2); radius too small");
}

Vec uniform_in_ball(CounterRng& rng, Eigen::Index d, double radius) {
  Vec dir(d);
  for (Eigen::Index j = 0; j < d; ++j) dir(j) = rng.normal();
  const double nrm = dir.norm();
  if (nrm == 0.0) return Vec::Zero(d);
  return dir * (radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / nrm);
}

}  // namespace

double DataPoint::norm() const { return std::sqrt(features.squaredNorm() + label * label); }

Vec DataPoint::concatenated() const {
  Vec z(features.size() + 1);
  z << features, label;
  return z;
}

std::string to_string(Generator g) {
  switch (g) {
    case Generator::unit_fixed: return "unit_fixed";
    case Generator::sphere_uniform: return "sphere_uniform";
    case Generator::gaussian_clipped: return "gaussian_clipped";
  }
  return "unknown";
}

Generator generator_from_string(const std::string& name) {
  if (name == "unit_fixed") return Generator::unit_fixed;
  if (name == "sphere_uniform") return Generator::sphere_uniform;
  if (name == "gaussian_clipped") return Generator::gaussian_clipped;
  throw std::invalid_argument("unknown generator '" + name + "'");
}

std::string to_string(LossFamily f) {
  switch (f) {
    case LossFamily::quadratic: return "quadratic";
    case LossFamily::ridge_quadratic: return "ridge_quadratic";
    case LossFamily::regularized_sine: return "regularized_sine";
    case LossFamily::scalar_power: return "scalar_power";
  }
  return "unknown";
}

LossFamily loss_family_from_string(const std::string& name) {
  if (name == "quadratic") return LossFamily::quadratic;
  if (name == "ridge_quadratic") return LossFamily::ridge_quadratic;
  if (name == "regularized_sine") return LossFamily::regularized_sine;
  if (name == "scalar_power") return LossFamily::scalar_power;
  throw std::invalid_argument("unknown loss family '" + name + "'");
}

void Dataset::validate() const {
  require(!points.empty(), "dataset needs n >= 1");
  require(dim >= 1, "dataset needs d >= 1");
  require(radius > 0.0, "dataset radius must be positive");
  for (const auto& x : points) {
    require(static_cast<std::size_t>(x.features.size()) == dim, "data point has the wrong dimension");
    require(x.norm() <= radius, "data point lies outside the radius");
  }
}

LossModel LossModel::quadratic() { return LossModel{}; }

LossModel LossModel::ridge_quadratic(double mu0) {
  require(mu0 > 0.0, "ridge weight must be positive");
  LossModel l;
  l.family = LossFamily::ridge_quadratic;
  l.ridge = mu0;
  return l;
}

LossModel LossModel::regularized_sine(double m0, double s) {
  require(m0 > 0.0, "base curvature must be positive");
  require(s >= 0.0, "sine amplitude must be nonnegative");
  LossModel l;
  l.family = LossFamily::regularized_sine;
  l.base_curvature = m0;
  l.amplitude = s;
  return l;
}

LossModel LossModel::scalar_power(double p, double mu) {
  require(p > 1.0 && p < 2.0, "power must lie in (1, 2)");
  require(mu > 0.0, "power loss scale must be positive");
  LossModel l;
  l.family = LossFamily::scalar_power;
  l.power = p;
  l.scale = mu;
  return l;
}

double loss_value(const LossModel& loss, const Vec& theta, const DataPoint& x) {
  check_dims(loss, theta, x);
  const double r = x.features.dot(theta) - x.label;
  switch (loss.family) {
    case LossFamily::quadratic: return 0.5 * r * r;
    case LossFamily::ridge_quadratic: return 0.5 * r * r + 0.5 * loss.ridge * theta.squaredNorm();
    case LossFamily::regularized_sine:
      return 0.5 * loss.base_curvature * theta.squaredNorm() + loss.amplitude * std::sin(r);
    case LossFamily::scalar_power:
      return loss.scale / loss.power * std::pow(std::abs(theta(0) - x.label), loss.power);
  }
  return 0.0;
}

Vec grad(const LossModel& loss, const Vec& theta, const DataPoint& x) {
  check_dims(loss, theta, x);
  switch (loss.family) {
    case LossFamily::quadratic: return x.features * (x.features.dot(theta) - x.label);
    case LossFamily::ridge_quadratic:
      return x.features * (x.features.dot(theta) - x.label) + loss.ridge * theta;
    case LossFamily::regularized_sine:
      return loss.base_curvature * theta +
             (loss.amplitude * std::cos(x.features.dot(theta) - x.label)) * x.features;
    case LossFamily::scalar_power: {
      Vec g(1);
      g(0) = loss.scale * signed_power(theta(0) - x.label, loss.power - 1.0);
      return g;
    }
  }
  return Vec::Zero(theta.size());
}

DataPoint draw_point(const DatasetSpec& spec, std::uint64_t seed, std::uint64_t slot, bool replacement) {
  CounterRng rng(seed, slot, replacement ? StreamTag::replacement : StreamTag::dataset, 0);
  const auto d = static_cast<Eigen::Index>(spec.d);
  DataPoint x;
  switch (spec.generator) {
    case Generator::unit_fixed:
      x.features = Vec::Unit(d, 0);
      x.label = 1.0;
      return x;
    case Generator::sphere_uniform:
      x.features = uniform_in_ball(rng, d, spec.radius);
      break;
    case Generator::gaussian_clipped:
      x.features.resize(d);
      for (Eigen::Index j = 0; j < d; ++j) x.features(j) = rng.normal();
      break;
  }
  x.label = spec.label_lo + (spec.label_hi - spec.label_lo) * rng.uniform();
  clip_to_radius(x, spec.radius);
  return x;
}

Dataset make_synthetic_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  Dataset ds;
  ds.radius = spec.radius;
  ds.dim = spec.d;
  ds.spec = spec;
  ds.seed = seed;
  ds.points.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) ds.points.push_back(draw_point(spec, seed, i, false));
  return ds;
}

NeighborPair make_neighbor(const Dataset& base, std::size_t index, std::uint64_t seed) {
  require(base.spec.has_value(), "dataset has no generator spec to redraw from");
  require(index < base.size(), "neighbor index out of range");
  return make_neighbor(base, index, draw_point(*base.spec, seed, index, true));
}

NeighborPair make_neighbor(const Dataset& base, std::size_t index, const DataPoint& replacement) {
  require(index < base.size(), "neighbor index out of range");
  require(static_cast<std::size_t>(replacement.features.size()) == base.dim,
          "replacement point has the wrong dimension");
  require(replacement.norm() <= base.radius, "replacement point lies outside the radius");
  NeighborPair pair{base, base, index};
  pair.perturbed.points[index] = replacement;
  return pair;
}

double max_grad_norm(const LossModel& loss, const Dataset& dataset, const Vec& theta) {
  double e = 0.0;
  for (const auto& x : dataset.points) e = std::max(e, grad(loss, theta, x).norm());
  return e;
}

AssumptionConstants derive_constants(const LossModel& loss, const Dataset& dataset) {
  dataset.validate();
  const double D = dataset.radius;
  AssumptionConstants c;
  c.D = D;
  c.E = max_grad_norm(loss, dataset, Vec::Zero(static_cast<Eigen::Index>(dataset.dim)));
  switch (loss.family) {
    case LossFamily::quadratic:
      // Hessian aa^T has norm <= D^2; |aa^T - bb^T| <= 2D|a - b| and |ay - bz| <= sqrt2 D|x - x'|.
      c.K1 = D * D;
      c.K2 = 2.0 * D;
      break;
    case LossFamily::ridge_quadratic:
      c.K1 = D * D + loss.ridge;
      c.K2 = 2.0 * D;
      c.mu = loss.ridge;
      c.m = loss.ridge;
      break;
    case LossFamily::regularized_sine:
      // s(cos u - cos v)<a, d> >= -2sD|d| >= -(m0/2)|d|^2 - 2s^2 D^2/m0 (Young).
      c.m = loss.base_curvature / 2.0;
      c.K = 2.0 * loss.amplitude * loss.amplitude * D * D / loss.base_curvature;
      c.K1 = loss.base_curvature + loss.amplitude * D * D;
      c.K2 = loss.amplitude * (D + 1.0);
      break;
    case LossFamily::scalar_power:
      require(dataset.dim == 1, "scalar_power needs d = 1");
      // |sgn(u)|u|^q - sgn(v)|v|^q| <= 2^{1-q}|u - v|^q with q = p - 1.
      c.p = loss.power;
      c.mu = (loss.power - 1.0) * loss.scale;
      c.K1 = std::pow(2.0, 2.0 - loss.power) * loss.scale;
      c.K2 = c.K1;
      break;
  }
  return c;
}

AssumptionConstants derive_constants(const LossModel& loss, const NeighborPair& pair) {
  AssumptionConstants c = derive_constants(loss, pair.base);
  c.E = std::max(c.E, derive_constants(loss, pair.perturbed).E);
  return c;
}

namespace {

struct Margin {
  double lhs;
  double rhs;
};

bool violated(const Margin& m) {
  return m.rhs - m.lhs < -1e-10 * (1.0 + std::abs(m.lhs) + std::abs(m.rhs));
}

}  // namespace

AssumptionReport check_assumptions(const LossModel& loss, const Dataset& dataset,
                                   const AssumptionConstants& c, std::size_t n_samples,
                                   std::uint64_t seed) {
  AssumptionReport report;
  const auto d = static_cast<Eigen::Index>(dataset.dim);
  const bool lipschitz = loss.family != LossFamily::scalar_power;
  const bool monotone = loss.family == LossFamily::quadratic || loss.family == LossFamily::ridge_quadratic;
  const bool dissipative = loss.family == LossFamily::ridge_quadratic ||
                           loss.family == LossFamily::regularized_sine;
  const bool power = loss.family == LossFamily::scalar_power;
  if (lipschitz) report.checked.push_back("gradient_lipschitz");
  if (monotone) report.checked.push_back("strong_convexity");
  if (dissipative) report.checked.push_back("dissipativity");
  if (power) report.checked.insert(report.checked.end(), {"sub_strong_convexity", "holder_gradient"});

  CounterRng rng(seed, 0, StreamTag::audit, 0);
  auto tally = [&](const Margin& m) {
    ++report.evaluations;
    report.worst_margin = std::min(report.worst_margin, m.rhs - m.lhs);
    if (violated(m)) ++report.violations;
  };

  for (std::size_t s = 0; s < n_samples; ++s) {
    const Vec t1 = uniform_in_ball(rng, d, 10.0);
    const Vec t2 = uniform_in_ball(rng, d, 10.0);
    const DataPoint& x = dataset.points[rng.below(dataset.size())];
    DataPoint xh = dataset.points[rng.below(dataset.size())];
    if (dataset.spec && (s % 2 == 1)) xh = draw_point(*dataset.spec, rng(), s, true);

    const Vec dt = t1 - t2;
    const double dx = (x.concatenated() - xh.concatenated()).norm();
    const double inner = (grad(loss, t1, x) - grad(loss, t2, x)).dot(dt);
    const double gap = (grad(loss, t1, x) - grad(loss, t2, xh)).norm();

    if (lipschitz) tally({gap, c.K1 * dt.norm() + c.K2 * dx * (t1.norm() + t2.norm() + 1.0)});
    if (monotone) tally({c.mu * dt.squaredNorm(), inner});
    if (dissipative) tally({c.m * dt.squaredNorm() - c.K, inner});
    if (power) {
      tally({c.mu * std::pow(dt.norm(), c.p), inner});
      const double q = c.p - 1.0;
      tally({gap, c.K1 * std::pow(dt.norm(), c.p / 2.0) +
                      c.K2 * dx * (std::pow(t1.norm(), q) + std::pow(t2.norm(), q) + 1.0)});
    }
  }
  return report;
}

Vec find_minimizer(const LossModel& loss, const Dataset& dataset, const Vec& theta0, double tol,
                   std::size_t max_iter) {
  const double n = static_cast<double>(dataset.size());
  auto full_grad = [&](const Vec& th) {
    Vec g = Vec::Zero(th.size());
    for (const auto& x : dataset.points) g += grad(loss, th, x);
    return Vec(g / n);
  };

  if (loss.family == LossFamily::scalar_power) {
    // The averaged derivative is monotone in theta; bisect between the extreme labels.
    double lo = dataset.points.front().label, hi = lo;
    for (const auto& x : dataset.points) {
      lo = std::min(lo, x.label);
      hi = std::max(hi, x.label);
    }
    Vec t(1);
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
      t(0) = 0.5 * (lo + hi);
      if (t(0) == lo || t(0) == hi) break;
      (full_grad(t)(0) > 0.0 ? hi : lo) = t(0);
    }
    t(0) = 0.5 * (lo + hi);
    return t;
  }

  const double L = derive_constants(loss, dataset).K1;
  Vec th = theta0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Vec g = full_grad(th);
    if (g.norm() <= tol) break;
    th -= g / L;
  }
  return th;
}

void write_dataset_jsonl(std::ostream& out, const Dataset& dataset) {
  nlohmann::json header = {{"n", dataset.size()},
                           {"d", dataset.dim},
                           {"D", dataset.radius},
                           {"generator", dataset.spec ? to_string(dataset.spec->generator) : "none"},
                           {"seed", dataset.seed}};
  if (dataset.spec) header["label_range"] = {dataset.spec->label_lo, dataset.spec->label_hi};
  out << header.dump() << '\n';
  for (const auto& x : dataset.points) {
    nlohmann::json row = {{"a", std::vector<double>(x.features.data(), x.features.data() + x.features.size())},
                          {"y", x.label}};
    out << row.dump() << '\n';
  }
}

Dataset read_dataset_jsonl(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "dataset file is empty");
  const auto header = nlohmann::json::parse(line);
  Dataset ds;
  const auto n = header.at("n").get<std::size_t>();
  ds.dim = header.at("d").get<std::size_t>();
  ds.radius = header.at("D").get<double>();
  ds.seed = header.value("seed", std::uint64_t{0});
  const auto gen = header.value("generator", std::string("none"));
  if (gen != "none") {
    DatasetSpec spec;
    spec.n = n;
    spec.d = ds.dim;
    spec.radius = ds.radius;
    spec.generator = generator_from_string(gen);
    if (header.contains("label_range")) {
      spec.label_lo = header["label_range"].at(0).get<double>();
      spec.label_hi = header["label_range"].at(1).get<double>();
    }
    ds.spec = spec;
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto row = nlohmann::json::parse(line);
    const auto a = row.at("a").get<std::vector<double>>();
    DataPoint x;
    x.features = Eigen::Map<const Vec>(a.data(), static_cast<Eigen::Index>(a.size()));
    x.label = row.at("y").get<double>();
    ds.points.push_back(std::move(x));
  }
  require(ds.points.size() == n, "dataset row count does not match the header");
  ds.validate();
  return ds;
}

}  // namespace stabilab
