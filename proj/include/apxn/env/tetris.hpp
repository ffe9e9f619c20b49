#pragma once

#include "apxn/policies.hpp"
#include "apxn/sampling.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace apxn::tetris {

constexpr int kPieces = 7;
constexpr int kMaxRows = 64;
constexpr int kMaxWidth = 32;
// Spare rows above the visible board; a piece can stick out by at most 4.
constexpr int kBuffer = 4;

/// Piece ids, in order: I O T S Z L J.
const char* piece_name(int piece);

struct Placement {
  int rotation = 0;
  int column = 0;
  bool operator==(const Placement&) const = default;
};

/// Occupancy grid, row 0 at the bottom, bit c of a row is column c.
struct Board {
  int width = 10;
  int height = 10;
  std::array<std::uint32_t, kMaxRows> rows{};

  Board() = default;
  Board(int w, int h);

  bool cell(int row, int col) const { return (rows[static_cast<std::size_t>(row)] >> col) & 1u; }
  std::uint32_t full_mask() const { return width == 32 ? 0xffffffffu : ((1u << width) - 1u); }
  bool empty() const;
  int column_height(int col) const;
  int holes() const;
  bool has_full_row() const;
  /// Any occupied cell at or above row `height`.
  bool overflows() const;
  std::uint64_t hash() const;
  std::string render() const;
};

/// Rotation classes of a piece (1, 2 or 4 distinct shapes).
int rotation_count(int piece);
/// Width in columns of a rotated piece.
int piece_width(int piece, int rotation);

/// All placements of `piece` that fit horizontally on a board of this width.
std::vector<Placement> legal_placements(int width, int piece);

struct Afterstate {
  Board board;  // after row clearing, not clipped to the visible height
  int lines = 0;
  bool top_out = false;
};

/// Drops the piece straight down at the given rotation and column, then clears
/// full rows.  Throws IllegalPlacement for an unknown rotation or a column
/// range outside the board.
Afterstate place(const Board& board, int piece, Placement p);

/// Column heights, absolute adjacent height differences, maximum height and
/// hole count: 2 * width + 1 values.
VectorX<double> features(const Board& board);
inline Index feature_count(int width) { return 2 * width + 1; }

/// Board plus the piece to be placed.  Placements, their features and their
/// afterstates are computed once on construction and shared between copies.
class State {
 public:
  State() = default;
  State(const Board& board, int piece);

  const Board& board() const { return node_->board; }
  int piece() const { return node_->piece; }
  const std::vector<Placement>& placements() const { return node_->placements; }
  const MatrixX<double>& feature_matrix() const { return node_->features; }
  const Afterstate& afterstate(Index a) const { return node_->after[static_cast<std::size_t>(a)]; }
  Index find(Placement p) const;

 private:
  struct Node {
    Board board;
    int piece = 0;
    std::vector<Placement> placements;
    MatrixX<double> features;
    std::vector<Afterstate> after;
  };
  std::shared_ptr<const Node> node_;
};

/// Tetris as an average-reward environment.  The reward is the number of
/// lines cleared.  A placement that leaves any cell above the visible board
/// ends the game: reward 0 and the next state is an empty board.  The empty
/// board is the recurrent state.  Pieces are drawn uniformly.
class Env {
 public:
  using State = tetris::State;
  using Action = Index;

  Env(int width = 10, int height = 10);

  int width() const { return width_; }
  int height() const { return height_; }
  Index n_features() const { return feature_count(width_); }

  State reset(Rng& rng) const;
  Transition<State> step(const State& s, Action a, Rng& rng) const;
  bool is_recurrent(const State& s) const { return s.board().empty(); }
  int draw_piece(Rng& rng) const;

 private:
  int width_, height_;
};

/// Step by explicit placement; IllegalPlacement if it is not legal for the
/// current piece.
Transition<State> step(const Env& env, const State& s, Placement p, Rng& rng);

using Policy = GibbsPolicy<double, State>;

/// Gibbs policy over placements with afterstate features.
Policy make_policy(const Env& env);

}  // namespace apxn::tetris
