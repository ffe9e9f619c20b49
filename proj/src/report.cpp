#include "apxn/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#ifndef APXN_BUILD_ID
#define APXN_BUILD_ID "unknown"
#endif

namespace apxn {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

nlohmann::ordered_json schedule_json(const StepSchedule& s) {
  nlohmann::ordered_json j;
  if (const auto* c = std::get_if<ConstantStep>(&s)) {
    j["kind"] = "constant";
    j["alpha"] = c->alpha;
  } else if (const auto* r = std::get_if<RobbinsMonroStep>(&s)) {
    j["kind"] = "robbins-monro";
    j["alpha"] = r->alpha;
  } else if (const auto* e = std::get_if<EmInterpStep>(&s)) {
    j["kind"] = "em-interp";
    j["alpha"] = e->alpha;
    j["total"] = e->total;
  } else if (const auto* l = std::get_if<LineSearchStep>(&s)) {
    j["kind"] = "line-search";
    j["step_sizes"] = l->candidates;
    j["games_per_candidate"] = l->games_per_candidate;
  }
  return j;
}

nlohmann::ordered_json config_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  j["environment"] = to_string(c.environment);
  if (c.environment == EnvKind::tabular) {
    j["mdp_file"] = c.mdp_file;
    j["policy_params"] = c.policy_params;
    j["policy_seed"] = c.policy_seed;
  }
  j["method"] = to_string(c.method);
  j["schedule"] = schedule_json(c.schedule);
  j["iterations"] = c.iterations;
  j["repetitions"] = c.repetitions;
  j["seed"] = c.seed;
  j["estimator"] = to_string(c.estimator);
  if (c.estimator == EstimatorKind::forward) {
    j["trajectories"] = c.trajectories;
    j["horizon"] = c.horizon;
    if (c.gamma) j["gamma"] = *c.gamma;
  }
  if (c.environment == EnvKind::tetris) {
    j["games_per_estimate"] = c.games_per_estimate;
    j["board_width"] = c.board_width;
    j["board_height"] = c.board_height;
    j["max_game_steps"] = c.max_game_steps;
  }
  if (c.environment == EnvKind::nonlinear) {
    j["sigma_kappa"] = c.sigma_kappa;
    j["sigma_eps"] = c.sigma_eps;
    j["sigma_r"] = c.sigma_r;
    j["sigma_start"] = c.sigma_start;
  }
  j["init"] = to_string(c.init);
  if (c.init == InitKind::uniform) {
    j["init_low"] = c.init_low;
    j["init_high"] = c.init_high;
  }
  if (c.init == InitKind::values) j["init_values"] = c.init_values;
  if (!c.transform.empty()) j["transform"] = c.transform;
  j["trace"] = c.trace;
  j["record_timing"] = c.record_timing;
  return j;
}

std::vector<double> as_vector(const VectorX<double>& v) { return {v.data(), v.data() + v.size()}; }

void write_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(Errc::IoError, "write failed for " + p.string());
}

}  // namespace

std::string build_id() { return APXN_BUILD_ID; }

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records) {
  std::map<int, std::vector<double>> by_iter;
  for (const auto& r : records) by_iter[r.iteration].push_back(r.score);
  std::vector<SummaryRow> out;
  for (const auto& [k, xs] : by_iter) {
    SummaryRow row;
    row.iteration = k;
    row.n = static_cast<int>(xs.size());
    double sum = 0.0;
    for (double x : xs) sum += x;
    row.mean = sum / row.n;
    if (row.n > 1) {
      double ss = 0.0;
      for (double x : xs) ss += (x - row.mean) * (x - row.mean);
      row.stderr_ = std::sqrt(ss / (row.n - 1) / row.n);
    }
    out.push_back(row);
  }
  return out;
}

std::string to_csv(const std::vector<RunRecord>& records) {
  std::string out = "repetition,iteration,score,alpha,dir_norm,ridge,ms,seed\n";
  for (const auto& r : records) {
    out += std::to_string(r.repetition) + ',' + std::to_string(r.iteration) + ',' + num(r.score) + ',' +
           num(r.alpha) + ',' + num(r.dir_norm) + ',' + num(r.ridge) + ',' + num(r.ms) + ',' +
           std::to_string(r.seed) + '\n';
  }
  return out;
}

std::string trace_csv(const RunResult& result) {
  const Index n = result.config.n_params();
  std::string out = "repetition,iteration";
  for (Index i = 1; i <= n; ++i) out += ",w" + std::to_string(i);
  out += '\n';
  const auto row = [&](int r, int k, const VectorX<double>& w) {
    out += std::to_string(r) + ',' + std::to_string(k);
    for (Index i = 0; i < w.size(); ++i) out += ',' + num(w(i));
    out += '\n';
  };
  for (std::size_t r = 0; r < result.initial.size(); ++r) {
    row(static_cast<int>(r), 0, result.initial[r]);
    for (const auto& rec : result.records)
      if (rec.repetition == static_cast<int>(r)) row(rec.repetition, rec.iteration, rec.params);
  }
  return out;
}

std::string to_json(const RunResult& result) {
  const auto& c = result.config;
  nlohmann::ordered_json j;
  j["config"] = config_json(c);
  j["build_id"] = build_id();
  auto& summary = j["summary"] = nlohmann::ordered_json::array();
  for (const auto& s : summarize(result.records))
    summary.push_back({{"iteration", s.iteration}, {"mean", s.mean}, {"stderr", s.stderr_}, {"n", s.n}});
  auto& seeds = j["seed_matrix"] = nlohmann::ordered_json::array();
  for (int r = 0; r < c.repetitions; ++r) {
    std::vector<std::uint64_t> row;
    for (int k = 1; k <= c.iterations; ++k) row.push_back(seed_matrix_entry(c.seed, r, k));
    seeds.push_back(row);
  }
  auto& init = j["initial_params"] = nlohmann::ordered_json::array();
  for (const auto& w : result.initial) init.push_back(as_vector(w));
  auto& final_params = j["final_params"] = nlohmann::ordered_json::array();
  for (int r = 0; r < c.repetitions; ++r) {
    VectorX<double> w = result.initial[static_cast<std::size_t>(r)];
    for (const auto& rec : result.records)
      if (rec.repetition == r) w = rec.params;
    final_params.push_back(as_vector(w));
  }
  return j.dump(2) + '\n';
}

void write_outputs(const RunResult& result, const std::filesystem::path& base) {
  auto with_ext = [&](const char* ext) { return std::filesystem::path(base.string() + ext); };
  write_file(with_ext(".csv"), to_csv(result.records));
  write_file(with_ext(".json"), to_json(result));
  if (result.config.trace) write_file(with_ext(".trace.csv"), trace_csv(result));
}

Comparison compare(const std::vector<RunResult>& runs) {
  if (runs.empty()) throw Error(Errc::ConfigError, "compare needs at least one run");
  const auto& ref = runs.front().config;
  Comparison cmp;
  for (const auto& run : runs) {
    const auto& c = run.config;
    if (c.seed != ref.seed || c.repetitions != ref.repetitions || c.iterations != ref.iterations)
      throw Error(Errc::SeedMatrixMismatch, "'" + c.name + "' does not share the seed matrix of '" + ref.name +
                                                "' (seed, repetitions and iterations must match)");
    if (c.environment != ref.environment)
      throw Error(Errc::SeedMatrixMismatch, "'" + c.name + "' runs a different environment than '" + ref.name + "'");
    for (std::size_t i = 0; i < run.records.size(); ++i) {
      const auto& rec = run.records[i];
      if (rec.seed != seed_matrix_entry(ref.seed, rec.repetition, rec.iteration))
        throw Error(Errc::SeedMatrixMismatch, "'" + c.name + "' used a seed outside the shared matrix");
    }
    cmp.labels.push_back(c.name.empty() ? std::string(to_string(c.method)) : c.name);
    cmp.columns.push_back(summarize(run.records));
  }
  if (ref.environment == EnvKind::nonlinear) {
    double best = 0.0;
    for (const auto& col : cmp.columns)
      for (const auto& row : col) best = std::max(best, row.mean);
    if (best > 0) {
      cmp.normalizer = best;
      for (auto& col : cmp.columns)
        for (auto& row : col) {
          row.mean /= best;
          row.stderr_ /= best;
        }
    }
  }
  return cmp;
}

std::string to_table(const Comparison& c) {
  std::ostringstream os;
  os << "iteration";
  for (const auto& l : c.labels) os << '\t' << l;
  os << '\n';
  std::size_t rows = 0;
  for (const auto& col : c.columns) rows = std::max(rows, col.size());
  for (std::size_t i = 0; i < rows; ++i) {
    int k = 0;
    for (const auto& col : c.columns)
      if (i < col.size()) k = col[i].iteration;
    os << k;
    for (const auto& col : c.columns) {
      os << '\t';
      if (i < col.size()) os << short_num(col[i].mean) << " +- " << short_num(col[i].stderr_);
    }
    os << '\n';
  }
  if (c.normalizer != 1.0) os << "# scores divided by " << num(c.normalizer) << '\n';
  return os.str();
}

}  // namespace apxn
