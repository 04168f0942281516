#pragma once

#include <array>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "skillstep/common.hpp"

namespace skillstep {

using Vec2 = std::array<float, 2>;

inline float sq_dist(const Vec2& a, const Vec2& b) {
  const float dx = a[0] - b[0], dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

/// Continuous point-mass maze on a wall/free cell grid. The outer boundary
/// is wall; x runs along columns, y along rows; cell (r, c) spans
/// [c*cell, (c+1)*cell) x [r*cell, (r+1)*cell).
struct MazeSpec {
  std::vector<std::string> grid;  // '#' wall, '.' free
  float cell_size = 1.0f;
  float action_max = 1.0f;
  float dt = 0.2f;
  float max_speed = 2.0f;

  int rows() const { return static_cast<int>(grid.size()); }
  int cols() const { return grid.empty() ? 0 : static_cast<int>(grid[0].size()); }
  float width() const { return static_cast<float>(cols()) * cell_size; }
  float height() const { return static_cast<float>(rows()) * cell_size; }

  bool is_wall_cell(int r, int c) const {
    if (r < 0 || c < 0 || r >= rows() || c >= cols()) return true;
    return grid[static_cast<size_t>(r)][static_cast<size_t>(c)] == '#';
  }

  Cell cell_at(const Vec2& p) const {
    return Cell{static_cast<int>(std::floor(p[1] / cell_size)),
                static_cast<int>(std::floor(p[0] / cell_size))};
  }

  bool is_free(const Vec2& p) const {
    const Cell c = cell_at(p);
    return !is_wall_cell(c.row, c.col);
  }

  Vec2 cell_center(const Cell& c) const {
    return Vec2{(static_cast<float>(c.col) + 0.5f) * cell_size,
                (static_cast<float>(c.row) + 0.5f) * cell_size};
  }

  std::vector<Cell> free_cells() const {
    std::vector<Cell> out;
    for (int r = 0; r < rows(); ++r)
      for (int c = 0; c < cols(); ++c)
        if (!is_wall_cell(r, c)) out.push_back(Cell{r, c});
    return out;
  }

  void validate() const {
    if (rows() < 3 || cols() < 3) throw ConfigError("maze: grid must be at least 3x3");
    for (const auto& row : grid) {
      if (static_cast<int>(row.size()) != cols())
        throw ConfigError("maze: ragged grid rows");
      for (char ch : row)
        if (ch != '#' && ch != '.') throw ConfigError("maze: invalid grid character");
    }
    for (int c = 0; c < cols(); ++c)
      if (!is_wall_cell(0, c) || !is_wall_cell(rows() - 1, c))
        throw ConfigError("maze: top/bottom boundary must be wall");
    for (int r = 0; r < rows(); ++r)
      if (!is_wall_cell(r, 0) || !is_wall_cell(r, cols() - 1))
        throw ConfigError("maze: left/right boundary must be wall");
    if (free_cells().empty()) throw ConfigError("maze: no free cells");
    if (cell_size <= 0 || dt <= 0 || max_speed <= 0 || action_max <= 0)
      throw ConfigError("maze: physics fields must be positive");
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "cell_size " << cell_size << "\n";
    os << "action_max " << action_max << "\n";
    os << "dt " << dt << "\n";
    os << "max_speed " << max_speed << "\n";
    os << "grid\n";
    for (const auto& row : grid) os << row << "\n";
    os << "end\n";
    return os.str();
  }

  uint64_t hash() const { return fnv1a(to_text()); }

  static MazeSpec parse(const std::string& text) {
    MazeSpec spec;
    spec.grid.clear();
    std::istringstream is(text);
    std::string line;
    bool in_grid = false;
    bool saw_end = false;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (in_grid) {
        if (line == "end") {
          in_grid = false;
          saw_end = true;
          continue;
        }
        spec.grid.push_back(line);
        continue;
      }
      if (line.empty() || line[0] == '#') continue;  // top-level comment
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "grid") {
        in_grid = true;
      } else if (key == "cell_size") {
        ls >> spec.cell_size;
      } else if (key == "action_max") {
        ls >> spec.action_max;
      } else if (key == "dt") {
        ls >> spec.dt;
      } else if (key == "max_speed") {
        ls >> spec.max_speed;
      } else {
        throw ConfigError("maze: unknown key '" + key + "'");
      }
      if (ls.fail()) throw ConfigError("maze: bad value for key '" + key + "'");
    }
    if (!saw_end && !spec.grid.empty())
      throw ConfigError("maze: grid block missing 'end'");
    spec.validate();
    return spec;
  }

  static MazeSpec load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("maze: cannot open " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse(buf.str());
  }
};

/// Built-in desk-scale layout: an 8x8 grid whose free cells form one
/// serpentine corridor, so corridor distance orders cells unambiguously.
inline MazeSpec default_maze() {
  MazeSpec spec;
  spec.grid = {
      "########",
      "#......#",
      "######.#",
      "#......#",
      "#.######",
      "#......#",
      "######.#",
      "########",
  };
  spec.validate();
  return spec;
}

struct EnvState {
  Vec2 pos{0.0f, 0.0f};
  Vec2 vel{0.0f, 0.0f};
};

struct Goal {
  Vec2 pos{0.0f, 0.0f};
};

struct EnvConfig {
  float gamma = 0.99f;
  int horizon = 400;
  float success_radius = 1.0f;
};

inline bool state_valid(const MazeSpec& spec, const EnvState& s) {
  if (!spec.is_free(s.pos)) return false;
  for (float v : s.vel)
    if (!std::isfinite(v) || std::abs(v) > spec.max_speed * (1.0f + 1e-5f)) return false;
  return std::isfinite(s.pos[0]) && std::isfinite(s.pos[1]);
}

inline EnvState reset(const MazeSpec& spec, const Vec2& start) {
  if (!spec.is_free(start))
    throw DataError("reset: start position inside wall");
  EnvState s;
  s.pos = start;
  s.vel = {0.0f, 0.0f};
  return s;
}

namespace detail {

// Move along one axis with cell-by-cell sweep; returns the reached
// coordinate and zeroes the velocity component on impact. `other` is the
// frozen coordinate of the other axis.
inline void sweep_axis(const MazeSpec& spec, int axis, float target, float other,
                       float* coord, float* vel_component) {
  constexpr float kEps = 1e-4f;
  const float cs = spec.cell_size;
  float cur = *coord;
  const int dir = target > cur ? 1 : -1;
  int cell = static_cast<int>(std::floor(cur / cs));
  const int target_cell = static_cast<int>(std::floor(target / cs));
  while (cell != target_cell) {
    const int next = cell + dir;
    const int r = axis == 0 ? static_cast<int>(std::floor(other / cs)) : next;
    const int c = axis == 0 ? next : static_cast<int>(std::floor(other / cs));
    if (spec.is_wall_cell(r, c)) {
      // clamp to the face of the wall cell
      const float face = dir > 0 ? static_cast<float>(next) * cs
                                 : static_cast<float>(next + 1) * cs;
      *coord = face - static_cast<float>(dir) * kEps;
      *vel_component = 0.0f;
      return;
    }
    cell = next;
  }
  *coord = target;
}

}  // namespace detail

/// Deterministic dynamics: clamp the action, integrate velocity, then move
/// x and y separately with wall clamping.
inline EnvState step(const MazeSpec& spec, const EnvState& state, const Vec2& action) {
  EnvState s = state;
  for (int i = 0; i < 2; ++i) {
    const float a = std::min(spec.action_max, std::max(-spec.action_max, action[i]));
    s.vel[i] = std::min(spec.max_speed, std::max(-spec.max_speed, s.vel[i] + a * spec.dt));
  }
  // x then y
  detail::sweep_axis(spec, 0, s.pos[0] + s.vel[0] * spec.dt, s.pos[1], &s.pos[0], &s.vel[0]);
  detail::sweep_axis(spec, 1, s.pos[1] + s.vel[1] * spec.dt, s.pos[0], &s.pos[1], &s.vel[1]);
  return s;
}

/// State-to-goal mapping: the goal space is the position plane.
inline Goal phi(const EnvState& s) { return Goal{s.pos}; }

/// Sparse indicator reward: 1 inside the closed success ball.
inline float reward(const EnvState& next_state, const Goal& goal, const EnvConfig& cfg) {
  return sq_dist(phi(next_state).pos, goal.pos) <= cfg.success_radius * cfg.success_radius
             ? 1.0f
             : 0.0f;
}

/// Normalized score: 100 iff squared goal distance is at most 1 (the
/// scoring radius is fixed at one length unit, independent of EnvConfig).
inline float normalized_score(const EnvState& final_state, const Goal& goal) {
  return sq_dist(phi(final_state).pos, goal.pos) <= 1.0f ? 100.0f : 0.0f;
}

/// Corridor (BFS) distance in cells from `from` to every cell; walls get -1.
inline std::vector<std::vector<int>> corridor_distances(const MazeSpec& spec, const Cell& from) {
  std::vector<std::vector<int>> dist(static_cast<size_t>(spec.rows()),
                                     std::vector<int>(static_cast<size_t>(spec.cols()), -1));
  if (spec.is_wall_cell(from.row, from.col)) return dist;
  std::deque<Cell> q{from};
  dist[static_cast<size_t>(from.row)][static_cast<size_t>(from.col)] = 0;
  while (!q.empty()) {
    const Cell cur = q.front();
    q.pop_front();
    const int d = dist[static_cast<size_t>(cur.row)][static_cast<size_t>(cur.col)];
    const int dr[4] = {-1, 1, 0, 0};
    const int dc[4] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const int r = cur.row + dr[k], c = cur.col + dc[k];
      if (spec.is_wall_cell(r, c)) continue;
      if (dist[static_cast<size_t>(r)][static_cast<size_t>(c)] >= 0) continue;
      dist[static_cast<size_t>(r)][static_cast<size_t>(c)] = d + 1;
      q.push_back(Cell{r, c});
    }
  }
  return dist;
}

/// Shortest cell path between two free cells (inclusive of both ends).
/// Empty result means unreachable.
inline std::vector<Cell> shortest_cell_path(const MazeSpec& spec, const Cell& from, const Cell& to) {
  const auto dist = corridor_distances(spec, to);
  if (spec.is_wall_cell(from.row, from.col) ||
      dist[static_cast<size_t>(from.row)][static_cast<size_t>(from.col)] < 0)
    return {};
  std::vector<Cell> path{from};
  Cell cur = from;
  while (!(cur == to)) {
    const int d = dist[static_cast<size_t>(cur.row)][static_cast<size_t>(cur.col)];
    const int dr[4] = {-1, 1, 0, 0};
    const int dc[4] = {0, 0, -1, 1};
    bool moved = false;
    for (int k = 0; k < 4 && !moved; ++k) {
      const int r = cur.row + dr[k], c = cur.col + dc[k];
      if (spec.is_wall_cell(r, c)) continue;
      if (dist[static_cast<size_t>(r)][static_cast<size_t>(c)] == d - 1) {
        cur = Cell{r, c};
        path.push_back(cur);
        moved = true;
      }
    }
    if (!moved) return {};
  }
  return path;
}

/// Nearest point inside free space (cells shrunk by a small margin).
/// Used to repair model-decoded states that land inside walls.
inline Vec2 clamp_to_free(const MazeSpec& spec, const Vec2& p, bool* was_clamped = nullptr) {
  if (spec.is_free(p)) {
    if (was_clamped) *was_clamped = false;
    return p;
  }
  constexpr float kMargin = 1e-3f;
  float best_d = std::numeric_limits<float>::max();
  Vec2 best = p;
  for (const Cell& c : spec.free_cells()) {
    const float x0 = static_cast<float>(c.col) * spec.cell_size + kMargin;
    const float x1 = static_cast<float>(c.col + 1) * spec.cell_size - kMargin;
    const float y0 = static_cast<float>(c.row) * spec.cell_size + kMargin;
    const float y1 = static_cast<float>(c.row + 1) * spec.cell_size - kMargin;
    const Vec2 q{std::min(x1, std::max(x0, p[0])), std::min(y1, std::max(y0, p[1]))};
    const float d = sq_dist(p, q);
    if (d < best_d) {
      best_d = d;
      best = q;
    }
  }
  if (was_clamped) *was_clamped = true;
  return best;
}

}  // namespace skillstep
