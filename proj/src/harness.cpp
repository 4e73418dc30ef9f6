#include "stabilab/harness.hpp"

#include "stabilab/combinatorics.hpp"
#include "stabilab/transport.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace stabilab {

using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------- config reading

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ConfigError("config field '" + path + "': " + what);
}

class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) field_error(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) const {
    if (!has(key)) field_error(at(key), "missing required field");
    return j_.at(key);
  }
  Node child(const std::string& key) const { return Node(raw(key), at(key)); }

  template <typename T>
  T get(const std::string& key) const {
    return convert<T>(raw(key), at(key));
  }
  template <typename T>
  T get_or(const std::string& key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) field_error(at(k), "unknown field");
  }

  template <typename T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) field_error(where, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) field_error(where, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) field_error(where, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) field_error(where, "expected a nonnegative integer");
      return v.get<T>();
    } else {
      using E = typename T::value_type;
      if (!v.is_array()) field_error(where, "expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<E>(v[i], where + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

 private:
  const json& j_;
  std::string path_;
};

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

NoiseKind noise_kind_from_string(const std::string& name, const std::string& where) {
  if (name == "none") return NoiseKind::none;
  if (name == "gaussian_diag") return NoiseKind::gaussian_diag;
  if (name == "laplace") return NoiseKind::laplace;
  field_error(where, "unknown noise kind '" + name + "'");
}

std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::gaussian_diag: return "gaussian_diag";
    case NoiseKind::laplace: return "laplace";
  }
  return "none";
}

TransportMethod estimator_from_string(const std::string& name, const std::string& where) {
  if (name == "coupled") return TransportMethod::coupled;
  if (name == "assignment") return TransportMethod::assignment;
  if (name == "exact_1d") return TransportMethod::exact_1d;
  field_error(where, "unknown estimator '" + name + "'");
}

CertificateKind certificate_kind_from_string(const std::string& name, const std::string& where) {
  for (CertificateKind k : {CertificateKind::contraction, CertificateKind::drift, CertificateKind::kernel_gap,
                            CertificateKind::minorization, CertificateKind::dominance})
    if (to_string(k) == name) return k;
  field_error(where, "unknown certificate kind '" + name + "'");
}

LossModel parse_loss(const Node& n) {
  const auto family_name = n.get<std::string>("family");
  LossFamily family;
  try {
    family = loss_family_from_string(family_name);
  } catch (const std::invalid_argument& e) {
    field_error(n.at("family"), e.what());
  }
  try {
    switch (family) {
      case LossFamily::quadratic:
        n.allow({"family"});
        return LossModel::quadratic();
      case LossFamily::ridge_quadratic:
        n.allow({"family", "ridge"});
        return LossModel::ridge_quadratic(n.get<double>("ridge"));
      case LossFamily::regularized_sine:
        n.allow({"family", "base_curvature", "amplitude"});
        return LossModel::regularized_sine(n.get<double>("base_curvature"), n.get<double>("amplitude"));
      case LossFamily::scalar_power:
        n.allow({"family", "power", "scale"});
        return LossModel::scalar_power(n.get<double>("power"), n.get<double>("scale"));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config field '" + n.at("family") + "': " + e.what());
  }
  return {};
}

json loss_to_json(const LossModel& l) {
  json j = {{"family", to_string(l.family)}};
  switch (l.family) {
    case LossFamily::quadratic: break;
    case LossFamily::ridge_quadratic: j["ridge"] = l.ridge; break;
    case LossFamily::regularized_sine:
      j["base_curvature"] = l.base_curvature;
      j["amplitude"] = l.amplitude;
      break;
    case LossFamily::scalar_power:
      j["power"] = l.power;
      j["scale"] = l.scale;
      break;
  }
  return j;
}

bool family_fits(Regime r, LossFamily f) {
  switch (r) {
    case Regime::quadratic: return f == LossFamily::quadratic;
    case Regime::strongly_convex: return f == LossFamily::ridge_quadratic;
    case Regime::nonconvex_noisy:
    case Regime::nonconvex_plain: return f == LossFamily::regularized_sine || f == LossFamily::ridge_quadratic;
    case Regime::subconvex_stationary: return f == LossFamily::scalar_power;
  }
  return false;
}

void validate(const ExperimentConfig& c) {
  if (c.schema_version != kSchemaVersion)
    field_error("schema_version", "unsupported version " + std::to_string(c.schema_version) + " (expected " +
                                      std::to_string(kSchemaVersion) + ")");
  if (!family_fits(c.regime, c.loss.family))
    field_error("regime", "regime " + to_string(c.regime) + " is incompatible with loss family " +
                              to_string(c.loss.family));
  const std::size_t d = c.dataset.d;
  if (c.loss.family == LossFamily::scalar_power && d != 1) field_error("dataset.d", "scalar_power needs d = 1");
  if (c.dataset.n == 0) field_error("dataset.n", "must be at least 1");
  if (d == 0) field_error("dataset.d", "must be at least 1");
  if (!(c.dataset.radius > 0.0)) field_error("dataset.radius", "must be positive");
  if (c.dataset.label_lo > c.dataset.label_hi) field_error("dataset.label_range", "expected [lo, hi] with lo <= hi");
  if (c.neighbor.index >= c.dataset.n) field_error("neighbor.index", "must be below dataset.n");
  if (c.neighbor.replacement_a && c.neighbor.replacement_a->size() != d)
    field_error("neighbor.replacement.a", "dimension must equal dataset.d");
  if (c.batch == 0 || c.batch > c.dataset.n) field_error("sgd.batch", "must lie in [1, n]");
  if (!(c.eta >= 0.0)) field_error("sgd.eta", "must be nonnegative");
  if (!c.theta0.empty() && c.theta0.size() != d) field_error("sgd.theta0", "dimension must equal dataset.d");
  if (c.noise.kind != NoiseKind::none && c.noise.scale.size() != d)
    field_error("noise.scale", "needs one entry per coordinate");
  if (c.regime == Regime::nonconvex_noisy && c.noise.kind == NoiseKind::none)
    field_error("noise.kind", "the nonconvex_noisy regime needs noise");
  if (c.regime == Regime::nonconvex_plain && c.noise.kind != NoiseKind::none)
    field_error("noise.kind", "the nonconvex_plain regime runs without noise");
  if (c.replicas == 0) field_error("simulation.replicas", "must be at least 1");
  if (!std::is_sorted(c.checkpoints.begin(), c.checkpoints.end()))
    field_error("simulation.checkpoints", "must be sorted");
  if (!c.checkpoints.empty() && c.checkpoints.back() > c.k_max)
    field_error("simulation.checkpoints", "entries must not exceed sgd.k_max");
  if (c.p && !(*c.p >= 1.0)) field_error("simulation.p", "must be >= 1");
  if (!(c.bound.epsilon > 0.0 && c.bound.epsilon < 1.0)) field_error("bound.epsilon", "must lie in (0, 1)");
  if (c.bound.eta_bar.has_value() != c.bound.psi.has_value())
    field_error("bound.eta_bar", "eta_bar and psi must be given together");
  for (const auto& [k, v] : c.bound.constants)
    if (!std::set<std::string>{"K1", "K2", "mu", "m", "K", "p", "D", "E"}.count(k))
      field_error("bound.constants." + k, "unknown constant");
}

// ---------------------------------------------------------------- formatting

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json horizon_json(Horizon k) { return k.infinite ? json("inf") : json(k.k); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

// ---------------------------------------------------------------- helpers

std::vector<std::uint64_t> checkpoints_of(const ExperimentConfig& c) {
  return c.checkpoints.empty() ? std::vector<std::uint64_t>{c.k_max} : c.checkpoints;
}

double minimizer_norm_numeric(const Experiment& ex) {
  const Vec z = Vec::Zero(ex.sgd.theta0.size());
  return std::max(find_minimizer(ex.loss, ex.pair.base, z).norm(), find_minimizer(ex.loss, ex.pair.perturbed, z).norm());
}

Vec gaussian_sigma(const Experiment& ex, const std::string& where) {
  if (ex.noise.kind != NoiseKind::gaussian_diag) field_error(where, "needs gaussian_diag noise");
  return ex.noise.scale;
}

template <typename T>
T param(const json& P, const std::string& key, T fallback, const std::string& where) {
  if (!P.contains(key)) return fallback;
  return Node::convert<T>(P.at(key), where + "." + key);
}

template <typename T>
T param_required(const json& P, const std::string& key, const std::string& where, const std::string& why) {
  if (!P.contains(key)) field_error(where + "." + key, why);
  return Node::convert<T>(P.at(key), where + "." + key);
}

std::optional<Vec> param_vec(const json& P, const std::string& key, const std::string& where) {
  if (!P.contains(key)) return std::nullopt;
  const auto v = Node::convert<std::vector<double>>(P.at(key), where + "." + key);
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

// ---------------------------------------------------------------- config

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error at " + line_col(text, e.byte) + ": " + e.what());
  }
  const Node r(root, "");
  r.allow({"schema_version", "master_seed", "regime", "loss", "dataset", "neighbor", "sgd", "noise", "simulation",
           "bound", "certificates"});

  ExperimentConfig c;
  c.schema_version = r.get<int>("schema_version");
  c.master_seed = r.get<std::uint64_t>("master_seed");
  try {
    c.regime = regime_from_string(r.get<std::string>("regime"));
  } catch (const std::invalid_argument& e) {
    field_error("regime", e.what());
  }
  c.loss = parse_loss(r.child("loss"));

  const Node ds = r.child("dataset");
  ds.allow({"n", "d", "radius", "label_range", "generator", "seed"});
  c.dataset.n = ds.get<std::size_t>("n");
  c.dataset.d = ds.get<std::size_t>("d");
  c.dataset.radius = ds.get<double>("radius");
  if (ds.has("label_range")) {
    const auto lr = ds.get<std::vector<double>>("label_range");
    if (lr.size() != 2) field_error(ds.at("label_range"), "expected [lo, hi]");
    c.dataset.label_lo = lr[0];
    c.dataset.label_hi = lr[1];
  }
  try {
    c.dataset.generator = generator_from_string(ds.get<std::string>("generator"));
  } catch (const std::invalid_argument& e) {
    field_error(ds.at("generator"), e.what());
  }
  c.dataset_seed = ds.get<std::uint64_t>("seed");

  if (r.has("neighbor")) {
    const Node nb = r.child("neighbor");
    nb.allow({"index", "seed", "identical", "replacement"});
    c.neighbor.index = nb.get<std::size_t>("index");
    c.neighbor.seed = nb.get_or<std::uint64_t>("seed", 0);
    c.neighbor.identical = nb.get_or<bool>("identical", false);
    if (nb.has("replacement")) {
      const Node rp = nb.child("replacement");
      rp.allow({"a", "y"});
      c.neighbor.replacement_a = rp.get<std::vector<double>>("a");
      c.neighbor.replacement_y = rp.get<double>("y");
    }
  }

  const Node sgd = r.child("sgd");
  sgd.allow({"eta", "batch", "k_max", "theta0"});
  c.eta = sgd.get<double>("eta");
  c.batch = sgd.get<std::size_t>("batch");
  c.k_max = sgd.get<std::uint64_t>("k_max");
  c.theta0 = sgd.get_or<std::vector<double>>("theta0", {});

  if (r.has("noise")) {
    const Node nz = r.child("noise");
    nz.allow({"kind", "scale"});
    c.noise.kind = noise_kind_from_string(nz.get<std::string>("kind"), nz.at("kind"));
    c.noise.scale = nz.get_or<std::vector<double>>("scale", {});
  }

  if (r.has("simulation")) {
    const Node sim = r.child("simulation");
    sim.allow({"replicas", "checkpoints", "estimators", "p", "dump_trajectories"});
    c.replicas = sim.get_or<std::size_t>("replicas", 1);
    c.checkpoints = sim.get_or<std::vector<std::uint64_t>>("checkpoints", {});
    if (sim.has("estimators")) {
      c.estimators.clear();
      for (const auto& name : sim.get<std::vector<std::string>>("estimators"))
        c.estimators.push_back(estimator_from_string(name, sim.at("estimators")));
    }
    if (sim.has("p")) c.p = sim.get<double>("p");
    c.dump_trajectories = sim.get_or<bool>("dump_trajectories", false);
  }

  if (r.has("bound")) {
    const Node b = r.child("bound");
    b.allow({"k", "rho_mode", "rho_samples", "epsilon", "m_grid", "minimizer", "lipschitz", "constants", "eta_bar",
             "psi"});
    if (b.has("k")) {
      const json& k = b.raw("k");
      if (k.is_string()) {
        if (k.get<std::string>() != "inf") field_error(b.at("k"), "expected a nonnegative integer or \"inf\"");
      } else {
        c.bound.k = b.get<std::uint64_t>("k");
      }
    }
    const auto mode = b.get_or<std::string>("rho_mode", "exact");
    if (mode == "exact")
      c.bound.rho_mode = SamplingMode::Kind::exact;
    else if (mode == "monte_carlo")
      c.bound.rho_mode = SamplingMode::Kind::monte_carlo;
    else
      field_error(b.at("rho_mode"), "expected \"exact\" or \"monte_carlo\"");
    c.bound.rho_samples = b.get_or<std::size_t>("rho_samples", 0);
    c.bound.epsilon = b.get_or<double>("epsilon", 0.5);
    c.bound.m_grid = b.get_or<std::vector<double>>("m_grid", {});
    const auto mini = b.get_or<std::string>("minimizer", "lemma");
    if (mini != "lemma" && mini != "numeric") field_error(b.at("minimizer"), "expected \"lemma\" or \"numeric\"");
    c.bound.numeric_minimizer = mini == "numeric";
    c.bound.lipschitz = b.get_or<double>("lipschitz", 1.0);
    if (b.has("constants")) {
      const Node cs = b.child("constants");
      for (const auto& [k, v] : b.raw("constants").items()) c.bound.constants[k] = cs.get<double>(k);
    }
    if (b.has("eta_bar")) c.bound.eta_bar = b.get<double>("eta_bar");
    if (b.has("psi")) c.bound.psi = b.get<double>("psi");
  }

  if (r.has("certificates")) {
    const json& cs = r.raw("certificates");
    if (cs.is_string()) {
      if (cs.get<std::string>() != "default") field_error("certificates", "expected a list or \"default\"");
    } else if (cs.is_array()) {
      c.certificates.emplace();
      for (std::size_t i = 0; i < cs.size(); ++i) {
        const std::string where = "certificates[" + std::to_string(i) + "]";
        const Node item(cs[i], where);
        CertificateSpec spec;
        spec.kind = certificate_kind_from_string(item.get<std::string>("kind"), item.at("kind"));
        switch (spec.kind) {
          case CertificateKind::contraction:
            item.allow({"kind", "claimed_rate", "theta_a", "theta_b", "k_max", "replicas"});
            break;
          case CertificateKind::drift:
            item.allow({"kind", "lyapunov", "claimed_delta", "claimed_L", "grid_radius", "grid_points", "mode",
                        "samples"});
            break;
          case CertificateKind::kernel_gap:
            item.allow({"kind", "lyapunov", "claimed_gamma", "grid_radius", "grid_points", "replicas"});
            break;
          case CertificateKind::minorization: item.allow({"kind", "epsilon", "M", "n_grid"}); break;
          case CertificateKind::dominance: item.allow({"kind", "estimator", "margin_rule"}); break;
        }
        spec.params = cs[i];
        spec.params.erase("kind");
        c.certificates->push_back(std::move(spec));
      }
    } else {
      field_error("certificates", "expected a list or \"default\"");
    }
  }

  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["master_seed"] = c.master_seed;
  j["regime"] = to_string(c.regime);
  j["loss"] = loss_to_json(c.loss);
  j["dataset"] = {{"n", c.dataset.n},
                  {"d", c.dataset.d},
                  {"radius", c.dataset.radius},
                  {"label_range", {c.dataset.label_lo, c.dataset.label_hi}},
                  {"generator", to_string(c.dataset.generator)},
                  {"seed", c.dataset_seed}};
  json nb = {{"index", c.neighbor.index}, {"seed", c.neighbor.seed}, {"identical", c.neighbor.identical}};
  if (c.neighbor.replacement_a) nb["replacement"] = {{"a", *c.neighbor.replacement_a}, {"y", *c.neighbor.replacement_y}};
  j["neighbor"] = nb;
  j["sgd"] = {{"eta", c.eta}, {"batch", c.batch}, {"k_max", c.k_max}, {"theta0", c.theta0}};
  j["noise"] = {{"kind", to_string(c.noise.kind)}, {"scale", c.noise.scale}};
  json est = json::array();
  for (auto e : c.estimators) est.push_back(to_string(e));
  j["simulation"] = {{"replicas", c.replicas},
                     {"checkpoints", c.checkpoints},
                     {"estimators", est},
                     {"dump_trajectories", c.dump_trajectories}};
  if (c.p) j["simulation"]["p"] = *c.p;
  json b = {{"k", c.bound.k ? json(*c.bound.k) : json("inf")},
            {"rho_mode", c.bound.rho_mode == SamplingMode::Kind::exact ? "exact" : "monte_carlo"},
            {"rho_samples", c.bound.rho_samples},
            {"epsilon", c.bound.epsilon},
            {"m_grid", c.bound.m_grid},
            {"minimizer", c.bound.numeric_minimizer ? "numeric" : "lemma"},
            {"lipschitz", c.bound.lipschitz},
            {"constants", c.bound.constants}};
  if (c.bound.eta_bar) b["eta_bar"] = *c.bound.eta_bar;
  if (c.bound.psi) b["psi"] = *c.bound.psi;
  j["bound"] = b;
  if (c.certificates) {
    json cs = json::array();
    for (const auto& spec : *c.certificates) {
      json item = spec.params;
      item["kind"] = to_string(spec.kind);
      cs.push_back(item);
    }
    j["certificates"] = cs;
  } else {
    j["certificates"] = "default";
  }
  return j;
}

// ---------------------------------------------------------------- experiment

Experiment build_experiment(const ExperimentConfig& c) {
  Experiment ex;
  ex.loss = c.loss;
  const Dataset base = make_synthetic_dataset(c.dataset, c.dataset_seed);
  try {
    if (c.neighbor.identical) {
      ex.pair = make_neighbor(base, c.neighbor.index, base.points[c.neighbor.index]);
    } else if (c.neighbor.replacement_a) {
      DataPoint x;
      x.features = Eigen::Map<const Vec>(c.neighbor.replacement_a->data(),
                                         static_cast<Eigen::Index>(c.neighbor.replacement_a->size()));
      x.label = *c.neighbor.replacement_y;
      ex.pair = make_neighbor(base, c.neighbor.index, x);
    } else {
      ex.pair = make_neighbor(base, c.neighbor.index, c.neighbor.seed);
    }
  } catch (const std::invalid_argument& e) {
    field_error("neighbor", e.what());
  }
  ex.sgd.eta = c.eta;
  ex.sgd.batch = c.batch;
  ex.sgd.k_max = c.k_max;
  ex.sgd.master_seed = c.master_seed;
  const auto d = static_cast<Eigen::Index>(c.dataset.d);
  ex.sgd.theta0 = c.theta0.empty() ? Vec::Zero(d) : Vec(Eigen::Map<const Vec>(c.theta0.data(), d));
  const Vec scale = c.noise.scale.empty() ? Vec() : Vec(Eigen::Map<const Vec>(c.noise.scale.data(), d));
  try {
    switch (c.noise.kind) {
      case NoiseKind::none: ex.noise = NoiseModel::none(); break;
      case NoiseKind::gaussian_diag: ex.noise = NoiseModel::gaussian_diag(scale); break;
      case NoiseKind::laplace: ex.noise = NoiseModel::laplace(scale); break;
    }
  } catch (const std::invalid_argument& e) {
    field_error("noise.scale", e.what());
  }
  ex.constants = derive_constants(ex.loss, ex.pair);
  for (const auto& [k, v] : c.bound.constants) {
    auto& C = ex.constants;
    double* slot = k == "K1" ? &C.K1 : k == "K2" ? &C.K2 : k == "mu" ? &C.mu : k == "m" ? &C.m
                 : k == "K"  ? &C.K  : k == "p"  ? &C.p  : k == "D"  ? &C.D  : &C.E;
    *slot = v;
  }
  return ex;
}

double metric_order(const ExperimentConfig& c) {
  if (c.p) return *c.p;
  switch (c.regime) {
    case Regime::nonconvex_plain: return 2.0;
    case Regime::subconvex_stationary: return c.loss.power;
    default: return 1.0;
  }
}

StabilityBound compute_bound(const ExperimentConfig& c, const Experiment& ex, Horizon k) {
  const auto& C = ex.constants;
  const std::size_t n = ex.pair.base.size();
  const double th = ex.sgd.theta0.norm();
  check_admissible(c.regime, C, c.eta);
  std::optional<double> Q;
  if (c.bound.numeric_minimizer && c.regime != Regime::quadratic && c.regime != Regime::subconvex_stationary)
    Q = minimizer_norm_numeric(ex);

  switch (c.regime) {
    case Regime::quadratic: {
      const SamplingMode mode = c.bound.rho_mode == SamplingMode::Kind::exact
                                    ? SamplingMode::exact()
                                    : SamplingMode::monte_carlo(c.bound.rho_samples);
      const auto rho = rho_quadratic(ex.pair.base, c.eta, c.batch, mode, c.master_seed);
      const auto rho_hat = rho_quadratic(ex.pair.perturbed, c.eta, c.batch, mode, c.master_seed);
      QuadraticBoundInputs in;
      in.rho = rho.rho;
      in.rho_hat = rho_hat.rho;
      in.mean_q_norm = rho_hat.mean_q_norm;
      in.D = C.D;
      in.eta = c.eta;
      in.b = c.batch;
      in.n = n;
      in.theta0_norm = th;
      return bound_quadratic(in, k);
    }
    case Regime::strongly_convex: return bound_strongly_convex(C, c.eta, n, th, k, Q);
    case Regime::nonconvex_noisy: {
      const double sigma2 = ex.noise.sigma2();
      NoisyRegimeConstants nc;
      if (c.bound.eta_bar) {
        nc = NoisyRegimeConstants::explicit_values(*c.bound.eta_bar, *c.bound.psi);
      } else {
        const Vec sigma = gaussian_sigma(ex, "noise.kind");
        const double q = Q.value_or(minimizer_norm_dissipative(C.m, C.K, C.E));
        const double K0 = k0_constant(C.m, c.eta, C.K1, C.K2, C.D, q * q, C.K, sigma2);
        double g = std::sqrt(2.0 * C.E * C.E + 2.0 * C.K1 * C.K1 * q * q);
        if (c.bound.numeric_minimizer) {
          const Vec z = Vec::Zero(ex.sgd.theta0.size());
          g = std::max(max_grad_norm(ex.loss, ex.pair.base, find_minimizer(ex.loss, ex.pair.base, z)),
                       max_grad_norm(ex.loss, ex.pair.perturbed, find_minimizer(ex.loss, ex.pair.perturbed, z)));
        }
        const auto grid = c.bound.m_grid.empty() ? default_m_grid(c.eta, g) : c.bound.m_grid;
        const EtaHat eh = eta_hat_gaussian_log(sigma, c.eta, C.m, K0, c.bound.epsilon, C.K1, g, grid);
        nc = NoisyRegimeConstants::from_eta_hat(C.m, c.eta, c.bound.epsilon, eh.log_eta_hat, K0, eh.argmax_M);
      }
      auto out = bound_nonconvex_noisy(C, c.eta, sigma2, c.batch, n, th, k, nc, Q);
      return out;
    }
    case Regime::nonconvex_plain: return bound_nonconvex_plain(C, c.eta, c.batch, n, th, k, Q);
    case Regime::subconvex_stationary: return bound_subconvex(C, c.eta, c.batch, n);
  }
  throw std::logic_error("unhandled regime");
}

StabilityBound compute_bound(const ExperimentConfig& c) {
  const Experiment ex = build_experiment(c);
  return compute_bound(c, ex, c.bound.k ? Horizon::steps(*c.bound.k) : Horizon::unbounded());
}

unsigned threads_from_env() {
  const char* v = std::getenv("STABILAB_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const unsigned long t = std::strtoul(v, &end, 10);
  if (*end != '\0') return 0;
  return static_cast<unsigned>(t);
}

// ---------------------------------------------------------------- simulate

namespace {

std::vector<EstimateRow> estimate_checkpoint(const ExperimentConfig& c, const CoupledEnsemble& ens, std::size_t ci,
                                             double p) {
  std::vector<EstimateRow> rows;
  const auto pairs = ens.pairs_at(ci);
  const bool any_diverged = ens.diverged_count() > 0;
  const std::uint64_t k = ens.checkpoints[ci];
  if (pairs.empty()) {
    for (auto m : c.estimators)
      rows.push_back({k, m, p, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), true});
    return rows;
  }
  const auto [A, B] = split_pairs(pairs);
  const TransportEstimate coupled = coupled_upper_bound(p, A, B);
  for (auto m : c.estimators) {
    TransportEstimate e;
    switch (m) {
      case TransportMethod::coupled: e = coupled; break;
      case TransportMethod::assignment: e = wasserstein_assignment(p, A, B); break;
      case TransportMethod::exact_1d: e = wasserstein_exact_1d(p, A, B); break;
    }
    // Sampling error of the plug-in estimators is proxied by the coupled one.
    rows.push_back({k, m, p, e.value, coupled.stderr_pow, any_diverged});
  }
  return rows;
}

void require_clouds(const ExperimentConfig& c) {
  for (auto m : c.estimators)
    if (m != TransportMethod::coupled && c.replicas < 2)
      field_error("simulation.replicas", to_string(m) + " estimator needs R >= 2 (it compares sample clouds)");
}

}  // namespace

RunSummary simulate(const ExperimentConfig& c, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  require_clouds(c);
  const Experiment ex = build_experiment(c);
  const auto cps = checkpoints_of(c);
  const double p = metric_order(c);
  const CoupledEnsemble ens = run_ensemble(ex.loss, ex.pair, ex.sgd, ex.noise, c.replicas, cps, options.threads);

  RunSummary s;
  s.seed = c.master_seed;
  s.diverged_replicas = ens.diverged_count();
  for (std::size_t ci = 0; ci < cps.size(); ++ci) {
    const auto rows = estimate_checkpoint(c, ens, ci, p);
    SummaryRow row;
    row.k = cps[ci];
    for (const auto& r : rows) row.empirical[to_string(r.estimator)] = r.value;
    try {
      const auto b = compute_bound(c, ex, Horizon::steps(cps[ci]));
      row.bound = b.value;
      row.bound_log = b.log_value;
    } catch (const std::exception& e) {
      row.bound_note = e.what();
    }
    s.estimates.insert(s.estimates.end(), rows.begin(), rows.end());
    s.rows.push_back(std::move(row));
  }
  s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

void write_estimates_csv(std::ostream& out, const std::vector<EstimateRow>& rows) {
  out << "k,estimator,p,value,stderr,status\n";
  for (const auto& r : rows)
    out << r.k << ',' << to_string(r.estimator) << ',' << fmt(r.p) << ',' << fmt(r.value) << ',' << fmt(r.stderr_pow)
        << ',' << (r.diverged ? "diverged" : "ok") << '\n';
}

json summary_to_json(const ExperimentConfig& c, const RunSummary& s) {
  json rows = json::array();
  for (const auto& r : s.rows) {
    json e = json::object();
    for (const auto& [name, v] : r.empirical) e[name] = number_or_null(v);
    json row = {{"k", r.k}, {"empirical", e}, {"bound", r.bound ? number_or_null(*r.bound) : json(nullptr)},
                {"bound_log", r.bound_log ? number_or_null(*r.bound_log) : json(nullptr)}};
    if (!r.bound_note.empty()) row["bound_note"] = r.bound_note;
    rows.push_back(row);
  }
  json certs = json::array();
  for (const auto& cert : s.certificates) certs.push_back(certificate_to_json(cert));
  return {{"seed", s.seed},
          {"regime", to_string(c.regime)},
          {"n", c.dataset.n},
          {"b", c.batch},
          {"eta", c.eta},
          {"replicas", c.replicas},
          {"p", metric_order(c)},
          {"diverged_replicas", s.diverged_replicas},
          {"rows", rows},
          {"certificates", certs}};
}

// ---------------------------------------------------------------- certificates

namespace {

struct SuiteContext {
  const ExperimentConfig& c;
  const Experiment& ex;
  const RunOptions& options;
  std::optional<Vec> minimizer_hat;  // minimizer of the perturbed empirical risk

  const Vec& theta_hat_star() {
    if (!minimizer_hat)
      minimizer_hat = find_minimizer(ex.loss, ex.pair.perturbed, Vec::Zero(ex.sgd.theta0.size()));
    return *minimizer_hat;
  }
};

Lyapunov default_lyapunov(Regime r) {
  return r == Regime::quadratic ? Lyapunov::one_plus_norm : Lyapunov::one_plus_sq_dist_to_min;
}

std::vector<Vec> grid_for(SuiteContext& ctx, const json& P, const std::string& where, Lyapunov v) {
  const double radius = param<double>(P, "grid_radius", 2.0, where);
  const auto points = param<std::size_t>(P, "grid_points", 33, where);
  const Vec center = v == Lyapunov::one_plus_sq_dist_to_min ? ctx.theta_hat_star()
                                                            : Vec(Vec::Zero(ctx.ex.sgd.theta0.size()));
  return ball_grid(center, radius, points);
}

Certificate run_contraction(SuiteContext& ctx, const json& P, const std::string& where) {
  const auto& c = ctx.c;
  const auto& C = ctx.ex.constants;
  double rate;
  if (P.contains("claimed_rate")) {
    rate = param<double>(P, "claimed_rate", 0.0, where);
  } else if (c.regime == Regime::quadratic) {
    rate = rho_quadratic(ctx.ex.pair.base, c.eta, c.batch, SamplingMode::exact()).rho;
  } else if (C.mu > 0.0) {
    rate = 1.0 - c.eta * C.mu / 2.0;
  } else {
    field_error(where + ".claimed_rate", "required for this regime");
  }
  ContractionOptions o;
  o.theta_a = param_vec(P, "theta_a", where);
  o.theta_b = param_vec(P, "theta_b", where);
  o.noise = ctx.ex.noise;
  o.threads = ctx.options.threads;
  const auto k_max = param<std::uint64_t>(P, "k_max", 50, where);
  const auto R = param<std::size_t>(P, "replicas", 32, where);
  return check_contraction(ctx.ex.loss, ctx.ex.pair.base, c.eta, c.batch, rate, k_max, R, c.master_seed, o);
}

// Drift constants of the regime's Lyapunov lemma.
std::pair<double, double> default_drift(SuiteContext& ctx, const std::string& where) {
  const auto& c = ctx.c;
  const auto& C = ctx.ex.constants;
  const double eta = c.eta;
  switch (c.regime) {
    case Regime::quadratic: {
      const auto r = rho_quadratic(ctx.ex.pair.perturbed, eta, c.batch, SamplingMode::exact());
      return {r.rho, 1.0 - r.rho + eta / static_cast<double>(c.batch) * r.mean_q_norm};
    }
    case Regime::strongly_convex: {
      const double q2 = ctx.theta_hat_star().squaredNorm();
      return {1.0 - eta * C.mu, 2.0 * eta * C.mu - eta * eta * C.K1 * C.K1 - 56.0 * eta * eta * C.D * C.D * C.K2 * C.K2 +
                                    64.0 * eta * eta * C.D * C.D * C.K2 * C.K2 * q2};
    }
    case Regime::nonconvex_noisy:
    case Regime::nonconvex_plain: {
      const double q2 = ctx.theta_hat_star().squaredNorm();
      return {1.0 - C.m * eta, 2.0 * C.m * eta - eta * eta * C.K1 * C.K1 - 56.0 * eta * eta * C.D * C.D * C.K2 * C.K2 +
                                   64.0 * eta * eta * C.D * C.D * C.K2 * C.K2 * q2 + 2.0 * eta * C.K +
                                   eta * eta * ctx.ex.noise.sigma2()};
    }
    case Regime::subconvex_stationary: break;
  }
  field_error(where + ".claimed_delta", "required for this regime");
}

Certificate run_drift(SuiteContext& ctx, const json& P, const std::string& where) {
  const auto& c = ctx.c;
  Lyapunov v = default_lyapunov(c.regime);
  if (P.contains("lyapunov")) {
    try {
      v = lyapunov_from_string(param<std::string>(P, "lyapunov", "", where));
    } catch (const std::invalid_argument& e) {
      field_error(where + ".lyapunov", e.what());
    }
  }
  double delta, L;
  if (P.contains("claimed_delta") || P.contains("claimed_L")) {
    delta = param_required<double>(P, "claimed_delta", where, "required with claimed_L");
    L = param_required<double>(P, "claimed_L", where, "required with claimed_delta");
  } else {
    std::tie(delta, L) = default_drift(ctx, where);
  }
  const auto grid = grid_for(ctx, P, where, v);
  const auto mode_name = param<std::string>(P, "mode", "", where);
  const bool enumerable = binomial(ctx.ex.pair.perturbed.size(), c.batch) <= kEnumerationCap;
  const bool exact_ok = !(ctx.ex.noise.active() && v == Lyapunov::one_plus_norm);
  SamplingMode mode = (mode_name == "exact" || (mode_name.empty() && enumerable && exact_ok))
                          ? SamplingMode::exact()
                          : SamplingMode::monte_carlo(param<std::size_t>(P, "samples", 4096, where));
  if (!mode_name.empty() && mode_name != "exact" && mode_name != "monte_carlo")
    field_error(where + ".mode", "expected \"exact\" or \"monte_carlo\"");
  LyapunovOptions o;
  o.noise = ctx.ex.noise;
  if (v == Lyapunov::one_plus_sq_dist_to_min) o.minimizer = ctx.theta_hat_star();
  return check_drift(ctx.ex.loss, ctx.ex.pair.perturbed, c.eta, c.batch, v, delta, L, grid, mode, c.master_seed, o);
}

Certificate run_kernel_gap(SuiteContext& ctx, const json& P, const std::string& where) {
  const auto& c = ctx.c;
  const auto& C = ctx.ex.constants;
  Lyapunov v = default_lyapunov(c.regime);
  if (P.contains("lyapunov")) {
    try {
      v = lyapunov_from_string(param<std::string>(P, "lyapunov", "", where));
    } catch (const std::invalid_argument& e) {
      field_error(where + ".lyapunov", e.what());
    }
  }
  const double n = static_cast<double>(c.dataset.n);
  double gamma;
  if (P.contains("claimed_gamma")) {
    gamma = param<double>(P, "claimed_gamma", 0.0, where);
  } else if (c.regime == Regime::quadratic) {
    gamma = 2.0 * c.eta * C.D * C.D / n;
  } else if (c.regime == Regime::strongly_convex) {
    gamma = 4.0 * C.D * C.K2 * c.eta / n * (2.0 * ctx.theta_hat_star().norm() + 1.0);
  } else {
    field_error(where + ".claimed_gamma", "required for this regime");
  }
  LyapunovOptions o;
  o.noise = ctx.ex.noise;
  if (v == Lyapunov::one_plus_sq_dist_to_min) o.minimizer = ctx.theta_hat_star();
  const auto grid = grid_for(ctx, P, where, v);
  const auto R = param<std::size_t>(P, "replicas", 64, where);
  return check_kernel_gap(ctx.ex.loss, ctx.ex.pair, c.eta, c.batch, v, gamma, grid, R, c.master_seed, o);
}

Certificate run_minorization(SuiteContext& ctx, const json& P, const std::string& where) {
  const auto& c = ctx.c;
  const auto& C = ctx.ex.constants;
  const Vec sigma = gaussian_sigma(ctx.ex, where);
  const Vec zero = Vec::Zero(ctx.ex.sgd.theta0.size());
  const Vec star = find_minimizer(ctx.ex.loss, ctx.ex.pair.base, zero);
  const double eps = param<double>(P, "epsilon", c.bound.epsilon, where);
  const double K0 = k0_constant(C.m, c.eta, C.K1, C.K2, C.D, star.squaredNorm(), C.K, ctx.ex.noise.sigma2());
  const double g = max_grad_norm(ctx.ex.loss, ctx.ex.pair.base, star);
  double M;
  if (P.contains("M")) {
    M = param<double>(P, "M", 0.0, where);
  } else {
    const auto grid = default_m_grid(c.eta, g);
    M = eta_hat_gaussian_log(sigma, c.eta, C.m, K0, eps, C.K1, g, grid).argmax_M;
  }
  const auto n_grid = param<std::size_t>(P, "n_grid", 33, where);
  MinorizationOptions o;
  o.theta_star = star;
  o.grad_sup = g;
  o.K1 = C.K1;
  return check_minorization_gaussian(ctx.ex.loss, ctx.ex.pair.base, c.eta, c.batch, sigma, C.m, K0, eps, M, n_grid,
                                     c.master_seed, o);
}

std::vector<Certificate> run_dominance(SuiteContext& ctx, const json& P, const std::string& where) {
  const auto& c = ctx.c;
  TransportMethod method = TransportMethod::coupled;
  if (P.contains("estimator"))
    method = estimator_from_string(param<std::string>(P, "estimator", "", where), where + ".estimator");
  if (method != TransportMethod::coupled && c.replicas < 2)
    field_error("simulation.replicas", to_string(method) + " estimator needs R >= 2 (it compares sample clouds)");
  MarginRule rule = MarginRule::three_sigma();
  if (P.contains("margin_rule")) {
    const json& mr = P.at("margin_rule");
    if (mr.is_string() && mr.get<std::string>() == "three_sigma") {
      rule = MarginRule::three_sigma();
    } else if (mr.is_object() && mr.contains("fixed")) {
      rule = MarginRule::fixed(Node::convert<double>(mr.at("fixed"), where + ".margin_rule.fixed"));
    } else {
      field_error(where + ".margin_rule", "expected \"three_sigma\" or {\"fixed\": rel}");
    }
  }
  const auto cps = checkpoints_of(c);
  const double p = metric_order(c);
  // Gate before simulating so an inadmissible step size is reported as such.
  check_admissible(c.regime, ctx.ex.constants, c.eta);
  const auto ens =
      run_ensemble(ctx.ex.loss, ctx.ex.pair, ctx.ex.sgd, ctx.ex.noise, c.replicas, cps, ctx.options.threads);
  std::vector<Certificate> out;
  for (std::size_t ci = 0; ci < cps.size(); ++ci) {
    const auto pairs = ens.pairs_at(ci);
    Certificate cert;
    if (pairs.empty()) {
      cert.kind = CertificateKind::dominance;
      cert.margin = -kInf();
      cert.confidence = "all replicas diverged";
    } else {
      const auto [A, B] = split_pairs(pairs);
      TransportEstimate e = coupled_upper_bound(p, A, B);
      if (method == TransportMethod::assignment) {
        const double se = e.stderr_pow;
        e = wasserstein_assignment(p, A, B);
        e.stderr_pow = se;
      } else if (method == TransportMethod::exact_1d) {
        const double se = e.stderr_pow;
        e = wasserstein_exact_1d(p, A, B);
        e.stderr_pow = se;
      }
      cert = check_bound_dominates(e, compute_bound(c, ctx.ex, Horizon::steps(cps[ci])), rule);
    }
    cert.details["k"] = static_cast<double>(cps[ci]);
    cert.details["diverged_replicas"] = static_cast<double>(ens.diverged_count());
    if (ens.diverged_count() > 0) cert.margin = std::min(cert.margin, -kInf());
    cert.passed = cert.margin >= 0.0;
    out.push_back(std::move(cert));
  }
  return out;
}

std::vector<CertificateSpec> default_suite(const ExperimentConfig& c) {
  std::vector<CertificateSpec> s;
  auto add = [&](CertificateKind k) { s.push_back({k, json::object()}); };
  switch (c.regime) {
    case Regime::quadratic:
      add(CertificateKind::contraction);
      add(CertificateKind::drift);
      add(CertificateKind::kernel_gap);
      break;
    case Regime::strongly_convex:
      add(CertificateKind::contraction);
      add(CertificateKind::drift);
      add(CertificateKind::kernel_gap);
      break;
    case Regime::nonconvex_noisy:
      add(CertificateKind::drift);
      if (c.dataset.d <= 2 && c.noise.kind == NoiseKind::gaussian_diag &&
          binomial(c.dataset.n, c.batch) <= kEnumerationCap)
        add(CertificateKind::minorization);
      break;
    case Regime::nonconvex_plain: add(CertificateKind::drift); break;
    case Regime::subconvex_stationary: break;
  }
  add(CertificateKind::dominance);
  return s;
}

}  // namespace

std::vector<Certificate> run_certificates(const ExperimentConfig& c, const RunOptions& options) {
  if (c.certificates && c.certificates->empty()) throw ConfigError("nothing to verify: the certificate list is empty");
  const auto specs = c.certificates ? *c.certificates : default_suite(c);
  const Experiment ex = build_experiment(c);
  SuiteContext ctx{c, ex, options, std::nullopt};
  std::vector<Certificate> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::string where = "certificates[" + std::to_string(i) + "]";
    const json& P = specs[i].params;
    switch (specs[i].kind) {
      case CertificateKind::contraction: out.push_back(run_contraction(ctx, P, where)); break;
      case CertificateKind::drift: out.push_back(run_drift(ctx, P, where)); break;
      case CertificateKind::kernel_gap: out.push_back(run_kernel_gap(ctx, P, where)); break;
      case CertificateKind::minorization: out.push_back(run_minorization(ctx, P, where)); break;
      case CertificateKind::dominance: {
        auto certs = run_dominance(ctx, P, where);
        out.insert(out.end(), certs.begin(), certs.end());
        break;
      }
    }
  }
  return out;
}

json certificate_to_json(const Certificate& cert) {
  json details = json::object();
  for (const auto& [k, v] : cert.details) details[k] = number_or_null(v);
  return {{"kind", to_string(cert.kind)},
          {"passed", cert.passed},
          {"margin", number_or_null(cert.margin)},
          {"details", details},
          {"confidence", cert.confidence}};
}

json bound_to_json(const ExperimentConfig& c, const StabilityBound& b) {
  json used = json::object();
  for (const auto& [k, v] : b.constants_used) used[k] = number_or_null(v);
  json j = {{"regime", to_string(b.regime)},
            {"k", horizon_json(b.k)},
            {"n", c.dataset.n},
            {"b", c.batch},
            {"eta", c.eta},
            {"value", number_or_null(b.value)},
            {"log_value", number_or_null(b.log_value)},
            {"order", b.order},
            {"admissible", b.admissible},
            {"constants_used", used}};
  if (b.order == 1.0) j["generalization"] = number_or_null(generalization_from_stability(c.bound.lipschitz, b.value));
  return j;
}

// ---------------------------------------------------------------- commands

int cmd_bounds(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const Horizon k = c.bound.k ? Horizon::steps(*c.bound.k) : Horizon::unbounded();
  try {
    const auto b = compute_bound(c);
    write_text(out_dir / "bounds.json", bound_to_json(c, b).dump(2) + "\n");
    return exit_ok;
  } catch (const InadmissibleError& e) {
    const json j = {{"regime", to_string(c.regime)},
                    {"k", horizon_json(k)},
                    {"n", c.dataset.n},
                    {"b", c.batch},
                    {"eta", c.eta},
                    {"value", nullptr},
                    {"admissible", false},
                    {"violated_constraint", e.constraint()},
                    {"constants_used", json::object()}};
    write_text(out_dir / "bounds.json", j.dump(2) + "\n");
    std::cerr << e.what() << '\n';
    return exit_inadmissible;
  }
}

int cmd_simulate(const ExperimentConfig& c, const std::filesystem::path& out_dir, const RunOptions& options) {
  const RunSummary s = simulate(c, options);
  std::filesystem::create_directories(out_dir);
  std::ostringstream csv;
  write_estimates_csv(csv, s.estimates);
  write_text(out_dir / "estimates.csv", csv.str());
  write_text(out_dir / "summary.json", summary_to_json(c, s).dump(2) + "\n");
  const Experiment ex = build_experiment(c);
  std::ostringstream base, pert;
  write_dataset_jsonl(base, ex.pair.base);
  write_dataset_jsonl(pert, ex.pair.perturbed);
  write_text(out_dir / "dataset.jsonl", base.str());
  write_text(out_dir / "dataset_perturbed.jsonl", pert.str());
  if (c.dump_trajectories) {
    const auto ens = run_ensemble(ex.loss, ex.pair, ex.sgd, ex.noise, c.replicas, checkpoints_of(c), options.threads);
    std::ostringstream tr;
    write_trajectories_csv(tr, ens);
    write_text(out_dir / "trajectories.csv", tr.str());
  }
  std::cerr << "simulate: wall-clock " << s.wall_seconds << " s, diverged replicas " << s.diverged_replicas << '\n';
  return exit_ok;
}

int cmd_verify(const ExperimentConfig& c, const std::filesystem::path& out_dir, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Certificate> certs;
  try {
    certs = run_certificates(c, options);
  } catch (const InadmissibleError& e) {
    std::cerr << e.what() << '\n';
    return exit_inadmissible;
  }
  std::filesystem::create_directories(out_dir);
  std::ostringstream out;
  bool all = true;
  for (const auto& cert : certs) {
    out << certificate_to_json(cert).dump() << '\n';
    all = all && cert.passed;
  }
  write_text(out_dir / "certificates.jsonl", out.str());
  std::cerr << "verify: " << certs.size() << " certificates, wall-clock "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
  return all ? exit_ok : exit_certificate_failure;
}

int cmd_report(const std::filesystem::path& in_dir, std::ostream& out) {
  if (!std::filesystem::is_directory(in_dir)) throw ConfigError("report input is not a directory: " + in_dir.string());
  std::ostringstream md;
  md << "# stabilab report\n";
  bool any = false;
  auto read = [&](const char* name) -> std::optional<std::string> {
    std::ifstream f(in_dir / name);
    if (!f) return std::nullopt;
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  auto cell = [](const json& v) { return v.is_null() ? std::string("-") : v.is_string() ? v.get<std::string>() : v.dump(); };
  // Bounds beyond double range are stored through their logarithm.
  auto bound_cell = [&](const json& value, const json& log_value) {
    if (value.is_null() && log_value.is_number()) return "exp(" + log_value.dump() + ")";
    return cell(value);
  };

  if (auto text = read("bounds.json")) {
    any = true;
    const json b = json::parse(*text);
    md << "\n## Bound\n\n| regime | k | n | b | eta | value | admissible |\n|---|---|---|---|---|---|---|\n";
    md << "| " << cell(b["regime"]) << " | " << cell(b["k"]) << " | " << cell(b["n"]) << " | " << cell(b["b"])
       << " | " << cell(b["eta"]) << " | " << bound_cell(b["value"], b.value("log_value", json())) << " | " << cell(b["admissible"]) << " |\n";
    if (b.contains("violated_constraint")) md << "\nViolated: `" << cell(b["violated_constraint"]) << "`\n";
  }
  if (auto text = read("summary.json")) {
    any = true;
    const json s = json::parse(*text);
    md << "\n## Empirical vs theoretical\n\n| k | estimator | value | bound |\n|---|---|---|---|\n";
    for (const auto& row : s["rows"])
      for (const auto& [name, v] : row["empirical"].items())
        md << "| " << cell(row["k"]) << " | " << name << " | " << cell(v) << " | " << bound_cell(row["bound"], row["bound_log"]) << " |\n";
  } else if (auto csv = read("estimates.csv")) {
    any = true;
    md << "\n## Estimates\n\n| k | estimator | p | value | stderr | status |\n|---|---|---|---|---|---|\n";
    std::istringstream in(*csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::string cellv;
      std::istringstream ls(line);
      md << '|';
      while (std::getline(ls, cellv, ',')) md << ' ' << cellv << " |";
      md << '\n';
    }
  }
  if (auto text = read("certificates.jsonl")) {
    any = true;
    md << "\n## Certificates\n\n| kind | passed | margin |\n|---|---|---|\n";
    std::istringstream in(*text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json cj = json::parse(line);
      md << "| " << cell(cj["kind"]) << " | " << cell(cj["passed"]) << " | " << cell(cj["margin"]) << " |\n";
    }
  }
  if (!any) throw ConfigError("no stabilab outputs found in " + in_dir.string());
  write_text(in_dir / "report.md", md.str());
  out << md.str();
  return exit_ok;
}

}  // namespace stabilab
