#pragma once

#include "apxn/directions.hpp"
#include "apxn/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace apxn {

enum class EnvKind { tabular, two_state, tetris, nonlinear };
enum class EstimatorKind { exact, forward, recurrent };
enum class InitKind { zeros, uniform, values };

std::string_view to_string(EnvKind e);
std::string_view to_string(EstimatorKind e);
std::string_view to_string(InitKind e);

/// One experiment: environment, policy, method, schedule and seeds.  Parsed
/// from a flat TOML document; see configs/README.md for the schema.
struct ExperimentConfig {
  std::string name;
  EnvKind environment = EnvKind::two_state;
  std::string mdp_file;    // tabular only
  int policy_params = 3;   // tabular: number of random Gibbs features
  std::uint64_t policy_seed = 1;

  Method method = Method::steepest;
  StepSchedule schedule = ConstantStep{1.0};
  int iterations = 10;
  int repetitions = 1;
  std::uint64_t seed = 1;

  EstimatorKind estimator = EstimatorKind::exact;
  int trajectories = 50;          // forward sampling, per iteration
  int games_per_estimate = 1000;  // recurrent estimator, cycles per iteration
  int horizon = 0;                // forward sampling; 0 = environment default
  std::optional<double> gamma;    // forward sampling; default from the environment

  int board_width = 10;
  int board_height = 10;
  std::uint64_t max_game_steps = 1'000'000;

  double sigma_kappa = 0.02;
  double sigma_eps = 0.1;
  double sigma_r = 0.1;
  double sigma_start = 0.001;

  InitKind init = InitKind::zeros;
  std::vector<double> init_low, init_high, init_values;
  std::vector<std::vector<double>> transform;  // rows of T; empty = identity

  bool trace = false;
  bool record_timing = false;
  std::string output;
  int threads = 0;  // 0 = APXN_THREADS or hardware concurrency

  /// Number of policy parameters implied by the environment.
  Index n_params() const;
  /// Throws ConfigError for inconsistent settings.
  void validate() const;
};

/// Parses TOML text.  Errors carry the source name, line and key.
ExperimentConfig parse_config(std::string_view text, std::string_view source = "<string>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// One optimizer iteration of one repetition.  `score` is the objective at the
/// iterate the step was computed from; `params` is the iterate after the step.
struct RunRecord {
  int repetition = 0;
  int iteration = 0;
  double score = 0.0;
  double alpha = 0.0;
  double dir_norm = 0.0;
  double ridge = 0.0;
  double ms = 0.0;
  std::uint64_t seed = 0;
  VectorX<double> params;
};

struct RunResult {
  ExperimentConfig config;
  std::vector<VectorX<double>> initial;  // one per repetition
  std::vector<RunRecord> records;        // ordered by (repetition, iteration)
};

/// Seed of repetition r (0-based) at iteration k (1-based); depends only on
/// the master seed, so every method in a comparison sees the same matrix.
/// k = 0 seeds the initialization.
std::uint64_t seed_matrix_entry(std::uint64_t master, int r, int k);

RunResult run(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

struct SummaryRow {
  int iteration = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  int n = 0;
};

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records);

std::string build_id();
std::string to_csv(const std::vector<RunRecord>& records);
std::string trace_csv(const RunResult& result);
std::string to_json(const RunResult& result);

/// Writes <base>.csv, <base>.json and, in trace mode, <base>.trace.csv.
void write_outputs(const RunResult& result, const std::filesystem::path& base);

/// Per-iteration mean and standard error of several runs side by side.  The
/// runs must share environment, repetitions, iterations and master seed.
/// Nonlinear-system scores are divided by the largest per-iteration mean
/// across all runs.
struct Comparison {
  std::vector<std::string> labels;
  std::vector<std::vector<SummaryRow>> columns;
  double normalizer = 1.0;
};

Comparison compare(const std::vector<RunResult>& runs);
std::string to_table(const Comparison& c);

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

struct VerifyOptions {
  std::uint64_t seed = 20240601;
  double gradient_perturbation = 0.0;  // test hook: added to one gradient component
};

struct VerifyCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

std::vector<VerifyCheck> verify(const VerifyOptions& opt = {});
std::string to_table(const std::vector<VerifyCheck>& checks);

}  // namespace apxn
