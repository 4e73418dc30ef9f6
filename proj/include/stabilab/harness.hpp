#pragma once

#include "stabilab/bounds.hpp"
#include "stabilab/dynamics.hpp"
#include "stabilab/model.hpp"
#include "stabilab/verify.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stabilab {

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_inadmissible = 2, exit_certificate_failure = 3 };

// Malformed or inconsistent configuration; the message names the line or field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NeighborSpec {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool identical = false;
  std::optional<std::vector<double>> replacement_a;
  std::optional<double> replacement_y;

  bool operator==(const NeighborSpec&) const = default;
};

struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  std::vector<double> scale;

  bool operator==(const NoiseSpec&) const = default;
};

struct BoundOptions {
  std::optional<std::uint64_t> k;  // absent means k = infinity
  SamplingMode::Kind rho_mode = SamplingMode::Kind::exact;
  std::size_t rho_samples = 0;
  double epsilon = 0.5;
  std::vector<double> m_grid;       // empty selects the default grid
  bool numeric_minimizer = false;   // use computed minimizer norms instead of the lemma bounds
  double lipschitz = 1.0;           // surrogate loss constant for the generalization bound
  std::map<std::string, double> constants;  // overrides of derived constants
  std::optional<double> eta_bar;
  std::optional<double> psi;

  bool operator==(const BoundOptions&) const = default;
};

struct CertificateSpec {
  CertificateKind kind = CertificateKind::contraction;
  nlohmann::json params = nlohmann::json::object();

  bool operator==(const CertificateSpec&) const = default;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t master_seed = 0;
  Regime regime = Regime::quadratic;
  LossModel loss;
  DatasetSpec dataset;
  std::uint64_t dataset_seed = 0;
  NeighborSpec neighbor;
  double eta = 0.1;
  std::size_t batch = 1;
  std::uint64_t k_max = 0;
  std::vector<double> theta0;  // empty means zero
  NoiseSpec noise;
  std::size_t replicas = 1;
  std::vector<std::uint64_t> checkpoints;  // empty means {k_max}
  std::vector<TransportMethod> estimators{TransportMethod::coupled};
  std::optional<double> p;  // defaults to the regime's metric order
  bool dump_trajectories = false;
  BoundOptions bound;
  std::optional<std::vector<CertificateSpec>> certificates;  // absent selects the regime's default suite

  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

// Objects built from a config.
struct Experiment {
  LossModel loss;
  NeighborPair pair;
  SGDConfig sgd;
  NoiseModel noise;
  AssumptionConstants constants;  // derived over the pair, then overridden
};

Experiment build_experiment(const ExperimentConfig& config);
double metric_order(const ExperimentConfig& config);
StabilityBound compute_bound(const ExperimentConfig& config, const Experiment& ex, Horizon k);
StabilityBound compute_bound(const ExperimentConfig& config);

struct RunOptions {
  unsigned threads = 0;  // 0: hardware concurrency
};

// Parallelism cap from STABILAB_THREADS; 0 when unset.
unsigned threads_from_env();

struct EstimateRow {
  std::uint64_t k = 0;
  TransportMethod estimator = TransportMethod::coupled;
  double p = 1.0;
  double value = 0.0;
  double stderr_pow = 0.0;
  bool diverged = false;
};

struct SummaryRow {
  std::uint64_t k = 0;
  std::map<std::string, double> empirical;  // estimator name -> value
  std::optional<double> bound;
  std::optional<double> bound_log;
  std::string bound_note;
};

struct RunSummary {
  std::uint64_t seed = 0;
  std::vector<EstimateRow> estimates;
  std::vector<SummaryRow> rows;
  std::vector<Certificate> certificates;
  std::size_t diverged_replicas = 0;
  double wall_seconds = 0.0;  // reported on stderr only
};

RunSummary simulate(const ExperimentConfig& config, const RunOptions& options = {});
std::vector<Certificate> run_certificates(const ExperimentConfig& config, const RunOptions& options = {});

nlohmann::json bound_to_json(const ExperimentConfig& config, const StabilityBound& bound);
nlohmann::json certificate_to_json(const Certificate& cert);
void write_estimates_csv(std::ostream& out, const std::vector<EstimateRow>& rows);
nlohmann::json summary_to_json(const ExperimentConfig& config, const RunSummary& summary);

// Subcommand front ends; each writes its files into out_dir and returns an ExitCode.
int cmd_bounds(const ExperimentConfig& config, const std::filesystem::path& out_dir);
int cmd_simulate(const ExperimentConfig& config, const std::filesystem::path& out_dir, const RunOptions& options = {});
int cmd_verify(const ExperimentConfig& config, const std::filesystem::path& out_dir, const RunOptions& options = {});
int cmd_report(const std::filesystem::path& in_dir, std::ostream& out);

int run_cli(int argc, const char* const* argv);

}  // namespace stabilab
