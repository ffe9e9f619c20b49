#include "apxn/experiment.hpp"
#include "apxn/env/tetris.hpp"

#include <toml.hpp>

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace apxn {

std::string_view to_string(EnvKind e) {
  switch (e) {
    case EnvKind::tabular: return "tabular";
    case EnvKind::two_state: return "two-state";
    case EnvKind::tetris: return "tetris";
    case EnvKind::nonlinear: return "nonlinear";
  }
  return "?";
}

std::string_view to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::exact: return "exact";
    case EstimatorKind::forward: return "forward";
    case EstimatorKind::recurrent: return "recurrent";
  }
  return "?";
}

std::string_view to_string(InitKind e) {
  switch (e) {
    case InitKind::zeros: return "zeros";
    case InitKind::uniform: return "uniform";
    case InitKind::values: return "values";
  }
  return "?";
}

Index ExperimentConfig::n_params() const {
  switch (environment) {
    case EnvKind::tabular: return policy_params;
    case EnvKind::two_state: return 2;
    case EnvKind::tetris: return tetris::feature_count(board_width);
    case EnvKind::nonlinear: return 2;
  }
  return 0;
}

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(Errc::ConfigError, msg); }

void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

}  // namespace

void ExperimentConfig::validate() const {
  require(iterations >= 0, "iterations must be >= 0");
  require(repetitions >= 1, "repetitions must be >= 1");
  require(threads >= 0, "threads must be >= 0");
  const Index n = n_params();

  switch (environment) {
    case EnvKind::tabular:
      require(!mdp_file.empty(), "environment 'tabular' needs mdp_file");
      require(policy_params >= 1, "policy_params must be >= 1");
      [[fallthrough]];
    case EnvKind::two_state:
      require(estimator == EstimatorKind::exact || estimator == EstimatorKind::forward,
              "tabular environments use the 'exact' or 'forward' estimator");
      break;
    case EnvKind::tetris:
      require(estimator == EstimatorKind::recurrent, "tetris uses the 'recurrent' estimator");
      require(board_width >= 4 && board_width <= tetris::kMaxWidth, "board_width must be in [4, 32]");
      require(board_height >= 4 && board_height <= tetris::kMaxRows - tetris::kBuffer,
              "board_height must be in [4, 60]");
      require(max_game_steps >= 1, "max_game_steps must be >= 1");
      break;
    case EnvKind::nonlinear:
      require(estimator == EstimatorKind::forward, "nonlinear uses the 'forward' estimator");
      require(sigma_kappa >= 0 && sigma_start >= 0, "noise levels must be >= 0");
      require(sigma_eps > 0 && sigma_r > 0, "sigma_eps and sigma_r must be > 0");
      break;
  }
  if (estimator == EstimatorKind::forward) {
    require(trajectories >= 1, "trajectories must be >= 1");
    require(horizon >= 0, "horizon must be >= 0");
    if (gamma) require(*gamma > 0 && *gamma <= 1, "gamma must be in (0, 1]");
    if (environment != EnvKind::nonlinear)
      require(horizon >= 1, "forward sampling on a tabular environment needs a horizon");
  }
  if (estimator == EstimatorKind::recurrent) require(games_per_estimate >= 1, "games_per_estimate must be >= 1");

  if (method == Method::em) {
    require(environment == EnvKind::nonlinear, "method 'em' needs a log-quadratic policy (nonlinear environment)");
  }
  if (const auto* ls = std::get_if<LineSearchStep>(&schedule)) {
    require(environment == EnvKind::tetris, "schedule 'line-search' is only available for tetris");
    require(method != Method::em, "method 'em' does not use a line search");
    require(!ls->candidates.empty(), "step_sizes must not be empty");
    for (double a : ls->candidates) require(a > 0, "step_sizes must be positive");
    require(ls->games_per_candidate >= 1, "games_per_candidate must be >= 1");
  } else if (const auto* c = std::get_if<ConstantStep>(&schedule)) {
    require(c->alpha > 0, "alpha must be > 0");
  } else if (const auto* r = std::get_if<RobbinsMonroStep>(&schedule)) {
    require(r->alpha > 0, "alpha must be > 0");
  } else if (const auto* e = std::get_if<EmInterpStep>(&schedule)) {
    require(e->alpha > 0, "alpha must be > 0");
    require(e->total >= iterations, "em-interp horizon must cover every iteration");
  }

  switch (init) {
    case InitKind::zeros: break;
    case InitKind::uniform:
      require(static_cast<Index>(init_low.size()) == n && static_cast<Index>(init_high.size()) == n,
              "init 'uniform' needs init_low and init_high with " + std::to_string(n) + " entries");
      for (std::size_t i = 0; i < init_low.size(); ++i) require(init_low[i] <= init_high[i], "init_low > init_high");
      break;
    case InitKind::values:
      require(static_cast<Index>(init_values.size()) == n,
              "init 'values' needs init_values with " + std::to_string(n) + " entries");
      break;
  }
  if (!transform.empty()) {
    require(static_cast<Index>(transform.size()) == n, "transform must have " + std::to_string(n) + " rows");
    for (const auto& row : transform)
      require(static_cast<Index>(row.size()) == n, "transform must have " + std::to_string(n) + " columns");
  }
}

namespace {

std::string where(std::string_view source, const toml::node& node, std::string_view key) {
  std::ostringstream os;
  os << source << ":" << node.source().begin.line << ": '" << key << "': ";
  return os.str();
}

struct Reader {
  std::string_view source;

  std::string prefix(const toml::node& n, std::string_view key) const { return where(source, n, key); }

  std::string str(const toml::node& n, std::string_view key) const {
    if (auto v = n.value<std::string>(); v && n.is_string()) return *v;
    fail(prefix(n, key) + "expected a string");
  }
  std::int64_t integer(const toml::node& n, std::string_view key) const {
    if (!n.is_integer()) fail(prefix(n, key) + "expected an integer");
    return *n.value<std::int64_t>();
  }
  int small_int(const toml::node& n, std::string_view key) const {
    const auto v = integer(n, key);
    if (v < -(1 << 30) || v > (1 << 30)) fail(prefix(n, key) + "integer out of range");
    return static_cast<int>(v);
  }
  std::uint64_t unsigned_int(const toml::node& n, std::string_view key) const {
    const auto v = integer(n, key);
    if (v < 0) fail(prefix(n, key) + "expected a non-negative integer");
    return static_cast<std::uint64_t>(v);
  }
  double real(const toml::node& n, std::string_view key) const {
    if (!n.is_number()) fail(prefix(n, key) + "expected a number");
    return *n.value<double>();
  }
  bool boolean(const toml::node& n, std::string_view key) const {
    if (!n.is_boolean()) fail(prefix(n, key) + "expected true or false");
    return *n.value<bool>();
  }
  std::vector<double> reals(const toml::node& n, std::string_view key) const {
    const auto* arr = n.as_array();
    if (!arr) fail(prefix(n, key) + "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : *arr) out.push_back(real(e, key));
    return out;
  }
  std::vector<std::vector<double>> matrix(const toml::node& n, std::string_view key) const {
    const auto* arr = n.as_array();
    if (!arr) fail(prefix(n, key) + "expected an array of rows");
    std::vector<std::vector<double>> out;
    for (const auto& row : *arr) out.push_back(reals(row, key));
    return out;
  }
};

}  // namespace

ExperimentConfig parse_config(std::string_view text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ": " << e.description();
    fail(os.str());
  }

  ExperimentConfig c;
  const Reader rd{source};
  std::string schedule = "constant";
  std::optional<double> alpha;
  std::optional<std::vector<double>> step_sizes;
  std::optional<int> games_per_candidate;
  const toml::node* schedule_node = &root;

  using Handler = std::function<void(const toml::node&, std::string_view)>;
  const std::map<std::string, Handler, std::less<>> handlers{
      {"name", [&](auto& n, auto k) { c.name = rd.str(n, k); }},
      {"environment",
       [&](auto& n, auto k) {
         const auto v = rd.str(n, k);
         if (v == "tabular") c.environment = EnvKind::tabular;
         else if (v == "two-state") c.environment = EnvKind::two_state;
         else if (v == "tetris") c.environment = EnvKind::tetris;
         else if (v == "nonlinear") c.environment = EnvKind::nonlinear;
         else fail(rd.prefix(n, k) + "unknown environment '" + v + "'");
       }},
      {"mdp_file", [&](auto& n, auto k) { c.mdp_file = rd.str(n, k); }},
      {"policy_params", [&](auto& n, auto k) { c.policy_params = rd.small_int(n, k); }},
      {"policy_seed", [&](auto& n, auto k) { c.policy_seed = rd.unsigned_int(n, k); }},
      {"method",
       [&](auto& n, auto k) {
         const auto v = rd.str(n, k);
         const auto m = parse_method(v);
         if (!m) fail(rd.prefix(n, k) + "unknown method '" + v + "'");
         c.method = *m;
       }},
      {"schedule",
       [&](auto& n, auto k) {
         schedule = rd.str(n, k);
         schedule_node = &n;
       }},
      {"alpha", [&](auto& n, auto k) { alpha = rd.real(n, k); }},
      {"step_sizes", [&](auto& n, auto k) { step_sizes = rd.reals(n, k); }},
      {"games_per_candidate", [&](auto& n, auto k) { games_per_candidate = rd.small_int(n, k); }},
      {"games_per_estimate", [&](auto& n, auto k) { c.games_per_estimate = rd.small_int(n, k); }},
      {"iterations", [&](auto& n, auto k) { c.iterations = rd.small_int(n, k); }},
      {"repetitions", [&](auto& n, auto k) { c.repetitions = rd.small_int(n, k); }},
      {"seed", [&](auto& n, auto k) { c.seed = rd.unsigned_int(n, k); }},
      {"estimator",
       [&](auto& n, auto k) {
         const auto v = rd.str(n, k);
         if (v == "exact") c.estimator = EstimatorKind::exact;
         else if (v == "forward") c.estimator = EstimatorKind::forward;
         else if (v == "recurrent") c.estimator = EstimatorKind::recurrent;
         else fail(rd.prefix(n, k) + "unknown estimator '" + v + "'");
       }},
      {"trajectories", [&](auto& n, auto k) { c.trajectories = rd.small_int(n, k); }},
      {"horizon", [&](auto& n, auto k) { c.horizon = rd.small_int(n, k); }},
      {"gamma", [&](auto& n, auto k) { c.gamma = rd.real(n, k); }},
      {"board_width", [&](auto& n, auto k) { c.board_width = rd.small_int(n, k); }},
      {"board_height", [&](auto& n, auto k) { c.board_height = rd.small_int(n, k); }},
      {"max_game_steps", [&](auto& n, auto k) { c.max_game_steps = rd.unsigned_int(n, k); }},
      {"sigma_kappa", [&](auto& n, auto k) { c.sigma_kappa = rd.real(n, k); }},
      {"sigma_eps", [&](auto& n, auto k) { c.sigma_eps = rd.real(n, k); }},
      {"sigma_r", [&](auto& n, auto k) { c.sigma_r = rd.real(n, k); }},
      {"sigma_start", [&](auto& n, auto k) { c.sigma_start = rd.real(n, k); }},
      {"init",
       [&](auto& n, auto k) {
         const auto v = rd.str(n, k);
         if (v == "zeros") c.init = InitKind::zeros;
         else if (v == "uniform") c.init = InitKind::uniform;
         else if (v == "values") c.init = InitKind::values;
         else fail(rd.prefix(n, k) + "unknown init '" + v + "'");
       }},
      {"init_low", [&](auto& n, auto k) { c.init_low = rd.reals(n, k); }},
      {"init_high", [&](auto& n, auto k) { c.init_high = rd.reals(n, k); }},
      {"init_values", [&](auto& n, auto k) { c.init_values = rd.reals(n, k); }},
      {"transform", [&](auto& n, auto k) { c.transform = rd.matrix(n, k); }},
      {"trace", [&](auto& n, auto k) { c.trace = rd.boolean(n, k); }},
      {"record_timing", [&](auto& n, auto k) { c.record_timing = rd.boolean(n, k); }},
      {"output", [&](auto& n, auto k) { c.output = rd.str(n, k); }},
      {"threads", [&](auto& n, auto k) { c.threads = rd.small_int(n, k); }},
  };

  for (const auto& [key, node] : root) {
    const auto it = handlers.find(key.str());
    if (it == handlers.end()) {
      std::ostringstream os;
      os << source << ":" << key.source().begin.line << ": unknown key '" << key.str() << "'";
      fail(os.str());
    }
    it->second(node, key.str());
  }

  const auto sched_err = [&](const std::string& msg) { fail(where(source, *schedule_node, "schedule") + msg); };
  if (schedule == "constant") {
    c.schedule = ConstantStep{alpha.value_or(1.0)};
  } else if (schedule == "robbins-monro") {
    c.schedule = RobbinsMonroStep{alpha.value_or(1.0)};
  } else if (schedule == "em-interp") {
    c.schedule = EmInterpStep{alpha.value_or(1.0), c.iterations};
  } else if (schedule == "line-search") {
    LineSearchStep ls;
    if (step_sizes) ls.candidates = *step_sizes;
    if (games_per_candidate) ls.games_per_candidate = *games_per_candidate;
    c.schedule = ls;
    if (alpha) sched_err("'alpha' does not apply to a line search");
  } else {
    sched_err("unknown schedule '" + schedule + "'");
  }
  if (schedule != "line-search" && (step_sizes || games_per_candidate))
    sched_err("'step_sizes' and 'games_per_candidate' need schedule = \"line-search\"");

  if (!c.gamma && c.environment == EnvKind::nonlinear) c.gamma = 1.0;
  try {
    c.validate();
  } catch (const Error& e) {
    fail(std::string(source) + ": " + (e.what() + std::string_view("ConfigError: ").size()));
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  auto c = parse_config(ss.str(), path.string());
  if (c.name.empty()) c.name = path.stem().string();
  if (c.environment == EnvKind::tabular && std::filesystem::path(c.mdp_file).is_relative())
    c.mdp_file = (path.parent_path() / c.mdp_file).string();
  return c;
}

}  // namespace apxn
