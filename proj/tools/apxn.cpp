#include "apxn/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

apxn::ExperimentConfig load(const std::string& path, const Overrides& o) {
  auto c = apxn::load_config(path);
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  return c;
}

std::filesystem::path output_base(const apxn::ExperimentConfig& c, const std::string& out_dir) {
  const std::string stem = c.output.empty() ? c.name : c.output;
  return out_dir.empty() ? std::filesystem::path(stem) : std::filesystem::path(out_dir) / stem;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy search experiments: steepest, natural, EM and approximate Newton"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  std::string out_dir;
  app.add_option("--seed", o.seed, "Master seed (overrides the config)");
  app.add_option("--threads", o.threads, "Worker threads (also APXN_THREADS)");
  app.add_option("--out", out_dir, "Output directory");

  auto* verify = app.add_subcommand("verify", "Run the oracle checks and print a pass/fail table");
  double inject = 0.0;
  verify->add_option("--inject-gradient-error", inject)->group("");

  auto* run = app.add_subcommand("run", "Run one experiment; writes <name>.csv and <name>.json");
  std::string config;
  run->add_option("config", config, "Experiment config (TOML)")->required()->check(CLI::ExistingFile);

  auto* cmp = app.add_subcommand("compare", "Run several experiments on a shared seed matrix and tabulate them");
  std::vector<std::string> configs;
  cmp->add_option("configs", configs, "Experiment configs (TOML)")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) {
      apxn::VerifyOptions vo;
      if (o.seed) vo.seed = *o.seed;
      vo.gradient_perturbation = inject;
      const auto checks = apxn::verify(vo);
      std::cout << apxn::to_table(checks);
      bool ok = true;
      for (const auto& c : checks) ok = ok && c.pass;
      std::cout << (ok ? "all checks passed\n" : "some checks FAILED\n");
      return ok ? 0 : 1;
    }
    if (*run) {
      const auto c = load(config, o);
      const auto result = apxn::run(c);
      const auto base = output_base(c, out_dir);
      apxn::write_outputs(result, base);
      std::cout << apxn::to_table(apxn::compare({result}));
      std::cout << "wrote " << base.string() << ".csv\n";
      return 0;
    }
    if (*cmp) {
      std::vector<apxn::RunResult> results;
      for (const auto& path : configs) {
        const auto c = load(path, o);
        if (!results.empty() && results.front().config.seed != c.seed)
          throw apxn::Error(apxn::Errc::SeedMatrixMismatch,
                            "'" + c.name + "' does not share the master seed of '" + results.front().config.name + "'");
        results.push_back(apxn::run(c));
        if (!out_dir.empty()) apxn::write_outputs(results.back(), output_base(c, out_dir));
      }
      const auto table = apxn::to_table(apxn::compare(results));
      std::cout << table;
      if (!out_dir.empty()) {
        std::ofstream f(std::filesystem::path(out_dir) / "compare.tsv", std::ios::binary);
        f << table;
      }
      return 0;
    }
  } catch (const apxn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
