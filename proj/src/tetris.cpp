#include "apxn/env/tetris.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <utility>

namespace apxn::tetris {
namespace {

struct Cell {
  int x, y;
  auto operator<=>(const Cell&) const = default;
};

struct Shape {
  std::array<Cell, 4> cells;
  int width = 0;
  int height = 0;
  std::array<int, 4> bottom{};  // lowest occupied y per column
};

using Cells = std::array<Cell, 4>;

// Spawn orientation of each piece.
constexpr std::array<Cells, kPieces> kBase = {{
    {{{0, 0}, {1, 0}, {2, 0}, {3, 0}}},  // I
    {{{0, 0}, {1, 0}, {0, 1}, {1, 1}}},  // O
    {{{0, 0}, {1, 0}, {2, 0}, {1, 1}}},  // T
    {{{0, 0}, {1, 0}, {1, 1}, {2, 1}}},  // S
    {{{1, 0}, {2, 0}, {0, 1}, {1, 1}}},  // Z
    {{{0, 0}, {1, 0}, {2, 0}, {2, 1}}},  // L
    {{{0, 0}, {1, 0}, {2, 0}, {0, 1}}},  // J
}};

Shape normalize(Cells c) {
  int mx = c[0].x, my = c[0].y;
  for (const auto& p : c) mx = std::min(mx, p.x), my = std::min(my, p.y);
  Shape s;
  for (auto& p : c) p = {p.x - mx, p.y - my};
  std::sort(c.begin(), c.end());
  s.cells = c;
  s.bottom.fill(1 << 20);
  for (const auto& p : c) {
    s.width = std::max(s.width, p.x + 1);
    s.height = std::max(s.height, p.y + 1);
    s.bottom[static_cast<std::size_t>(p.x)] = std::min(s.bottom[static_cast<std::size_t>(p.x)], p.y);
  }
  return s;
}

std::vector<std::vector<Shape>> build_shapes() {
  std::vector<std::vector<Shape>> all(kPieces);
  for (int k = 0; k < kPieces; ++k) {
    Cells c = kBase[static_cast<std::size_t>(k)];
    for (int r = 0; r < 4; ++r) {
      const Shape s = normalize(c);
      const bool seen = std::any_of(all[k].begin(), all[k].end(), [&](const Shape& o) { return o.cells == s.cells; });
      if (!seen) all[k].push_back(s);
      for (auto& p : c) p = {p.y, -p.x};
    }
  }
  return all;
}

const std::vector<std::vector<Shape>>& shapes() {
  static const auto table = build_shapes();
  return table;
}

void check_piece(int piece) {
  if (piece < 0 || piece >= kPieces) throw Error(Errc::IllegalPlacement, "unknown piece id");
}

}  // namespace

const char* piece_name(int piece) {
  static constexpr const char* names[kPieces] = {"I", "O", "T", "S", "Z", "L", "J"};
  check_piece(piece);
  return names[piece];
}

Board::Board(int w, int h) : width(w), height(h) {
  if (w < 4 || w > kMaxWidth || h < 4 || h + kBuffer > kMaxRows)
    throw Error(Errc::ConfigError, "board must be 4..32 wide and 4..60 high");
}

bool Board::empty() const {
  return std::all_of(rows.begin(), rows.end(), [](std::uint32_t r) { return r == 0; });
}

int Board::column_height(int col) const {
  for (int r = std::min(kMaxRows, height + kBuffer) - 1; r >= 0; --r)
    if (cell(r, col)) return r + 1;
  return 0;
}

int Board::holes() const {
  int n = 0;
  for (int c = 0; c < width; ++c) {
    const int h = column_height(c);
    for (int r = 0; r < h; ++r) n += !cell(r, c);
  }
  return n;
}

bool Board::has_full_row() const {
  const auto mask = full_mask();
  return std::any_of(rows.begin(), rows.end(), [mask](std::uint32_t r) { return r == mask; });
}

bool Board::overflows() const {
  for (int r = height; r < kMaxRows; ++r)
    if (rows[static_cast<std::size_t>(r)]) return true;
  return false;
}

std::uint64_t Board::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(static_cast<std::uint64_t>(width));
  mix(static_cast<std::uint64_t>(height));
  for (int r = 0; r < height + kBuffer; ++r) mix(rows[static_cast<std::size_t>(r)]);
  return h;
}

std::string Board::render() const {
  std::ostringstream os;
  for (int r = height - 1; r >= 0; --r) {
    os << '|';
    for (int c = 0; c < width; ++c) os << (cell(r, c) ? '#' : '.');
    os << "|\n";
  }
  os << '+' << std::string(static_cast<std::size_t>(width), '-') << "+\n";
  return os.str();
}

int rotation_count(int piece) {
  check_piece(piece);
  return static_cast<int>(shapes()[static_cast<std::size_t>(piece)].size());
}

int piece_width(int piece, int rotation) {
  check_piece(piece);
  const auto& s = shapes()[static_cast<std::size_t>(piece)];
  if (rotation < 0 || rotation >= static_cast<int>(s.size())) throw Error(Errc::IllegalPlacement, "unknown rotation");
  return s[static_cast<std::size_t>(rotation)].width;
}

std::vector<Placement> legal_placements(int width, int piece) {
  std::vector<Placement> out;
  for (int r = 0; r < rotation_count(piece); ++r)
    for (int c = 0; c + piece_width(piece, r) <= width; ++c) out.push_back({r, c});
  return out;
}

Afterstate place(const Board& board, int piece, Placement p) {
  const int w = piece_width(piece, p.rotation);
  if (p.column < 0 || p.column + w > board.width)
    throw Error(Errc::IllegalPlacement, "placement does not fit on the board");
  if (board.overflows()) throw Error(Errc::IllegalPlacement, "board already overflows");
  const Shape& s = shapes()[static_cast<std::size_t>(piece)][static_cast<std::size_t>(p.rotation)];

  int y = 0;
  for (int dx = 0; dx < s.width; ++dx)
    y = std::max(y, board.column_height(p.column + dx) - s.bottom[static_cast<std::size_t>(dx)]);

  Afterstate out;
  out.board = board;
  for (const auto& c : s.cells) out.board.rows[static_cast<std::size_t>(y + c.y)] |= 1u << (p.column + c.x);

  const auto mask = board.full_mask();
  int dst = 0;
  for (int src = 0; src < kMaxRows; ++src) {
    const auto row = out.board.rows[static_cast<std::size_t>(src)];
    if (row == mask) {
      ++out.lines;
      continue;
    }
    out.board.rows[static_cast<std::size_t>(dst++)] = row;
  }
  for (; dst < kMaxRows; ++dst) out.board.rows[static_cast<std::size_t>(dst)] = 0;
  out.top_out = out.board.overflows();
  return out;
}

VectorX<double> features(const Board& board) {
  const int w = board.width;
  VectorX<double> f(feature_count(w));
  int max_h = 0;
  for (int c = 0; c < w; ++c) {
    const int h = board.column_height(c);
    f(c) = h;
    max_h = std::max(max_h, h);
  }
  for (int c = 0; c + 1 < w; ++c) f(w + c) = std::abs(f(c + 1) - f(c));
  f(2 * w - 1) = max_h;
  f(2 * w) = board.holes();
  return f;
}

State::State(const Board& board, int piece) {
  check_piece(piece);
  auto node = std::make_shared<Node>();
  node->board = board;
  node->piece = piece;
  node->placements = legal_placements(board.width, piece);
  const auto n = static_cast<Index>(node->placements.size());
  node->features.resize(n, feature_count(board.width));
  node->after.reserve(node->placements.size());
  for (Index a = 0; a < n; ++a) {
    node->after.push_back(place(board, piece, node->placements[static_cast<std::size_t>(a)]));
    node->features.row(a) = features(node->after.back().board).transpose();
  }
  node_ = std::move(node);
}

Index State::find(Placement p) const {
  const auto& ps = placements();
  const auto it = std::find(ps.begin(), ps.end(), p);
  if (it == ps.end()) throw Error(Errc::IllegalPlacement, "placement is not legal for the current piece");
  return static_cast<Index>(it - ps.begin());
}

Env::Env(int width, int height) : width_(width), height_(height) { Board check(width, height); }

int Env::draw_piece(Rng& rng) const { return std::uniform_int_distribution<int>(0, kPieces - 1)(rng); }

State Env::reset(Rng& rng) const { return State(Board(width_, height_), draw_piece(rng)); }

Transition<State> Env::step(const State& s, Action a, Rng& rng) const {
  if (a < 0 || a >= static_cast<Index>(s.placements().size()))
    throw Error(Errc::IllegalPlacement, "placement index out of range");
  const Afterstate& after = s.afterstate(a);
  const int piece = draw_piece(rng);
  if (after.top_out) return {State(Board(width_, height_), piece), 0.0, false};
  return {State(after.board, piece), double(after.lines), false};
}

Transition<State> step(const Env& env, const State& s, Placement p, Rng& rng) { return env.step(s, s.find(p), rng); }

Policy make_policy(const Env& env) {
  return Policy(env.n_features(), [](const State& s) -> const MatrixX<double>& { return s.feature_matrix(); });
}

}  // namespace apxn::tetris
