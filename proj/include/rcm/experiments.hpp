#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rcm/heavy_tails.hpp"
#include "rcm/stats.hpp"

namespace rcm {

struct ToleranceSettings {
  double location = 0.0;         // atom matching, absolute
  double weight_relative = 0.05; // atom matching
  double eta = 1e-2;             // coupling truncation factor
  double j1_delta = 0.1;         // target jump threshold of the J1 diagnostic
};

struct ExperimentConfig {
  ModelParams params;
  std::vector<long long> n_list{256, 512, 1024};
  long long K = 2;
  std::vector<double> h_list{1.25, 1.5, 2.0, 4.0};
  std::size_t environments = 200;  // per n
  std::size_t replicas = 1;        // walks per environment
  std::size_t limit_replicas = 2000;
  std::uint64_t master_seed = 0;
  std::vector<std::string> estimators{"discrete", "limit"};
  std::string output_dir = "out";
  bool coupled = false;            // RW only: environments across n share one coupling bundle
  bool collapse = true;
  double collapse_ratio = 50.0;
  double grid_step = 0.01;
  double weight_cutoff = 1e-3;
  double epsilon0 = 1e-4;          // truncation of independently sampled limit subordinators
  double speed_density_factor = 1.0;
  ToleranceSettings tolerance;

  bool wants(const std::string& estimator) const;
  /// Throws std::invalid_argument on unknown keys or invalid values; master_seed is required.
  static ExperimentConfig from_json(const std::string& text);
  std::string to_json() const;
  /// FNV-1a of the canonical JSON form.
  std::uint64_t hash() const;
  void validate() const;
};

/// Default configuration for one of the experiment names.
ExperimentConfig default_config(const std::string& experiment);

struct CurveRow {
  std::string estimator;
  long long n = 0;  // 0 for limit estimators
  double h = 0.0;
  EstimateResult estimate;
  std::optional<double> sentinel_fraction;
};

struct QuenchedRow {
  long long n;
  std::size_t environment;
  double h;
  double estimate;
  std::uint64_t replicas;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<CurveRow> rows;
  std::vector<QuenchedRow> quenched;
  /// Named raw samples (Gap values, J1 bounds) in deterministic order.
  std::map<std::string, std::vector<double>> samples;
  /// Named integer diagnostics (mismatch counts, failures).
  std::map<std::string, long long> counters;
  double wall_seconds = 0.0;

  /// Row lookup; throws when absent.
  const CurveRow& row(const std::string& estimator, long long n, double h) const;
};

/// Runs task(i) for i in [0, count) on up to `workers` threads. Results must be
/// written to slots indexed by i so that the outcome ignores scheduling.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& task);

ExperimentResult run_aging_walls(const ExperimentConfig& config, unsigned workers = 1);
ExperimentResult run_aging_traps(const ExperimentConfig& config, unsigned workers = 1);
ExperimentResult run_subaging(const ExperimentConfig& config, unsigned workers = 1);
ExperimentResult run_gap(const ExperimentConfig& config, unsigned workers = 1);
ExperimentResult run_j1(const ExperimentConfig& config, unsigned workers = 1);
ExperimentResult run_experiment(const std::string& name, const ExperimentConfig& config, unsigned workers = 1);

/// Limit Gap(1) samples from fresh subordinators (sentinels dropped), with
/// the number of sentinels.
std::vector<double> limit_gap_samples(const ExperimentConfig& config, std::size_t count, std::uint64_t stream_tag,
                                      std::size_t* sentinels = nullptr, unsigned workers = 1);

enum class OutputFormat { Csv, Jsonl };
OutputFormat format_from_string(const std::string& text);

/// curves.csv (or curves.jsonl), quenched and sample files, and meta.json.
void write_outputs(const ExperimentResult& result, const ExperimentConfig& config, const std::string& out_dir,
                   OutputFormat format = OutputFormat::Csv);
std::string curves_csv(const ExperimentResult& result);
std::string curves_jsonl(const ExperimentResult& result);

}  // namespace rcm
