#include "apxn/env/nonlinear.hpp"
#include "apxn/env/tabular.hpp"
#include "apxn/env/tetris.hpp"
#include "apxn/exact.hpp"
#include "apxn/oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace apxn;
using namespace apxn::testing;
namespace tt = apxn::tetris;
namespace nl = apxn::nonlinear;

namespace {

// First runs of the deterministic simulators.
constexpr std::uint64_t kFrozenTetrisHash = 8642511019640251227ull;
constexpr int kFrozenTetrisLines = 0;
constexpr double kFrozenNonlinear[3][2] = {{-0.018102466384959923, 1.0162376485956299},
                                           {0.42387832075321552, 0.19921303885358935},
                                           {0.25089112743847786, -1.1207832614358808}};

tt::Board board_from(const std::vector<std::string>& rows_top_down, int width = 10, int height = 10) {
  tt::Board b(width, height);
  const int n = static_cast<int>(rows_top_down.size());
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < width; ++c)
      if (rows_top_down[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] == '#')
        b.rows[static_cast<std::size_t>(n - 1 - i)] |= 1u << c;
  return b;
}

}  // namespace

TEST_SUITE("environments") {
  TEST_CASE("two-state factory is deterministic and valid") {
    const auto a = two_state_factory();
    const auto b = two_state_factory();
    CHECK(a.mdp.trans == b.mdp.trans);
    CHECK(a.mdp.reward == b.mdp.reward);
    CHECK(validate(a.mdp).empty());
    CHECK(a.policy.n_params() == 2);
    const Vec w = Vec::Zero(2);
    CHECK(std::abs(occupancy_and_value(a.mdp, a.policy, w).u -
                   trajectory_sums(a.mdp, a.policy, w, truncation_cut(0.95, 1.0, 1e-10)).value) < 1e-8);
  }

  TEST_CASE("two-state value agrees with path enumeration within its tail bound") {
    const auto p = two_state_factory();
    const Vec w = random_vector(2, 3);
    const int cut = 10;
    const double bound = std::pow(0.95, cut) / (1 - 0.95);
    CHECK(std::abs(occupancy_and_value(p.mdp, p.policy, w).u - enumerate_return(p.mdp, p.policy, w, cut)) <= bound);
  }

  TEST_CASE("tetris: placement counts on the empty board") {
    const tt::Board empty(10, 10);
    CHECK(tt::legal_placements(10, 1).size() == 9);   // O
    CHECK(tt::rotation_count(1) == 1);
    CHECK(tt::legal_placements(10, 0).size() == 17);  // I
    CHECK(tt::rotation_count(0) == 2);
    CHECK(tt::rotation_count(3) == 2);
    CHECK(tt::rotation_count(4) == 2);
    CHECK(tt::rotation_count(2) == 4);
    CHECK(tt::rotation_count(5) == 4);
    CHECK(tt::rotation_count(6) == 4);
    for (int piece = 0; piece < tt::kPieces; ++piece)
      CHECK(tt::legal_placements(10, piece).size() <= 40);
  }

  TEST_CASE("tetris: empty-board features are zero") {
    const tt::Board empty(10, 10);
    const Vec f = tt::features(empty);
    CHECK(f.size() == 21);
    CHECK(f.isZero(0));
  }

  TEST_CASE("tetris: features of a known board") {
    const auto b = board_from({
        "#.........",
        "#..#......",
        "##.#....#.",
    });
    const Vec f = tt::features(b);
    const Vec heights = (Vec(10) << 3, 1, 0, 2, 0, 0, 0, 0, 1, 0).finished();
    CHECK(f.head(10) == heights);
    CHECK(f.segment(10, 9) == (Vec(9) << 2, 1, 2, 2, 0, 0, 0, 1, 1).finished());
    CHECK(f(19) == 3);
    CHECK(f(20) == 0);
    const auto h = board_from({"##........", "#.........", "..#......."});
    CHECK(tt::features(h)(20) == 3);
  }

  TEST_CASE("tetris: completing a bottom row clears it") {
    const auto b = board_from({"######...."});
    // Horizontal I in columns 6..9.
    const auto after = tt::place(b, 0, {0, 6});
    CHECK(after.lines == 1);
    CHECK(after.board.empty());
    CHECK(!after.top_out);

    tt::Env env;
    Rng rng(1);
    const tt::State s(b, 0);
    const auto tr = tt::step(env, s, {0, 6}, rng);
    CHECK(tr.reward == 1);
    CHECK(tr.next.board().empty());
    CHECK(env.is_recurrent(tr.next));
  }

  TEST_CASE("tetris: top-out returns to the empty board with zero reward") {
    std::vector<std::string> rows(9, "#.........");
    const auto b = board_from(rows);
    tt::Env env;
    Rng rng(2);
    const tt::State s(b, 0);
    const auto tr = tt::step(env, s, {1, 0}, rng);  // vertical I on the stack
    CHECK(s.afterstate(s.find({1, 0})).top_out);
    CHECK(tr.reward == 0);
    CHECK(tr.next.board().empty());
  }

  TEST_CASE("tetris: illegal placements are rejected") {
    tt::Env env;
    Rng rng(3);
    const tt::State s(tt::Board(10, 10), 1);
    CHECK_THROWS_AS(tt::step(env, s, {0, 9}, rng), Error);
    CHECK_THROWS_AS(tt::step(env, s, {1, 0}, rng), Error);
    CHECK_THROWS_AS(tt::place(s.board(), 7, {0, 0}), Error);
    try {
      (void)tt::step(env, s, {0, -1}, rng);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::IllegalPlacement);
    }
  }

  TEST_CASE("tetris: scripted game reproduces the frozen board") {
    tt::Env env;
    Rng rng(20240607);
    auto s = env.reset(rng);
    int lines = 0;
    for (int t = 0; t < 30; ++t) {
      const auto& ps = s.placements();
      const auto p = ps[static_cast<std::size_t>((7 * t + 3) % static_cast<int>(ps.size()))];
      auto tr = tt::step(env, s, p, rng);
      lines += static_cast<int>(tr.reward);
      s = tr.next;
      CHECK(!s.board().has_full_row());
    }
    CHECK(s.board().hash() == kFrozenTetrisHash);
    CHECK(lines == kFrozenTetrisLines);
  }

  TEST_CASE("tetris: random play always returns to the empty board") {
    tt::Env env;
    const auto pol = tt::make_policy(env);
    const Vec w = Vec::Zero(env.n_features());
    int finished = 0;
    for (int g = 0; g < 1000; ++g) {
      Rng rng(split_seed(55, static_cast<std::uint64_t>(g)));
      auto s = env.reset(rng);
      for (int t = 0; t < 10000; ++t) {
        const int holes_before = s.board().holes();
        const Index a = pol.sample(s, w, rng);
        const auto& after = s.afterstate(a);
        auto tr = env.step(s, a, rng);
        if (!after.top_out && after.lines == 0) CHECK(tr.next.board().holes() >= holes_before);
        s = tr.next;
        if (env.is_recurrent(s)) {
          ++finished;
          break;
        }
      }
    }
    CHECK(finished == 1000);
  }

  TEST_CASE("tetris: features match afterstates for every placement") {
    tt::Env env;
    Rng rng(4);
    auto s = env.reset(rng);
    for (int t = 0; t < 20; ++t) {
      for (Index a = 0; a < static_cast<Index>(s.placements().size()); ++a) {
        const Vec f = s.feature_matrix().row(a).transpose();
        CHECK(f == tt::features(s.afterstate(a).board));
        CHECK(f.minCoeff() >= 0);
      }
      s = env.step(s, 0, rng).next;
    }
  }

  TEST_CASE("tetris: bit-determinism given the seed") {
    tt::Env env;
    const auto pol = tt::make_policy(env);
    const Vec w = random_vector(env.n_features(), 5, 0.1);
    auto run = [&] {
      Rng rng(99);
      auto s = env.reset(rng);
      std::uint64_t h = 0;
      for (int t = 0; t < 200; ++t) {
        auto tr = env.step(s, pol.sample(s, w, rng), rng);
        s = tr.next;
        h = h * 31 + s.board().hash();
      }
      return h;
    };
    CHECK(run() == run());
  }

  TEST_CASE("nonlinear: zero control leaves the position unchanged without noise") {
    nl::Params p;
    p.sigma_kappa = 0;
    const nl::Env env(p);
    Rng rng(1);
    const nl::State s(0.3, -0.2);
    const auto tr = env.step(s, Vec::Zero(1), rng);
    CHECK(tr.next(0) == s(0));
    CHECK(tr.next(1) == doctest::Approx(s(1) - 0.1 * s(0)));
    const auto far = env.step(s, Vec::Constant(1, 1e6), rng);
    CHECK(far.next(0) - s(0) == doctest::Approx(0.5));
  }

  TEST_CASE("nonlinear: step derivative in the control is the sigmoid derivative") {
    nl::Params p;
    p.sigma_kappa = 0;
    const nl::Env env(p);
    const nl::State s(0.1, 0.7);
    for (double u : {-3.0, -0.5, 0.0, 0.4, 2.5}) {
      const double h = 1e-6;
      const double fd = (env.mean_next(s, u + h)(0) - env.mean_next(s, u - h)(0)) / (2 * h);
      const double sg = nl::sigmoid(u);
      CHECK(std::abs(fd - sg * (1 - sg)) < 1e-6);
    }
  }

  TEST_CASE("nonlinear: policy is linear Gaussian in the gains") {
    const auto pol = nl::make_policy(nl::Params{});
    const nl::State s(0.5, -1.0);
    const Vec w = (Vec(2) << 2.0, -3.0).finished();
    CHECK(pol.mean(s, w)(0) == doctest::Approx(2.0 * 0.5 + 3.0));
    CHECK(pol.noise_covariance(s)(0, 0) == doctest::Approx(0.01 * 1.25));
  }

  TEST_CASE("nonlinear: seeded rollout reproduces the frozen states") {
    const nl::Env env;
    const auto pol = nl::make_policy(env.params());
    const Vec w = Vec::Zero(2);
    Rng rng(2024);
    auto s = env.reset(rng);
    std::vector<nl::State> seq;
    for (int t = 0; t < env.horizon(); ++t) {
      auto tr = env.step(s, pol.sample(s, w, rng), rng);
      s = tr.next;
      seq.push_back(s);
    }
    const std::size_t idx[3] = {0, 39, 79};
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 2; ++j) CHECK(seq[idx[k]](j) == doctest::Approx(kFrozenNonlinear[k][j]).epsilon(1e-12));
  }
}
