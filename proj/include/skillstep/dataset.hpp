#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "skillstep/maze.hpp"

namespace skillstep {

enum class Provenance : uint32_t { kExpert = 0, kSynthetic = 1 };

struct Trajectory {
  std::vector<EnvState> states;
  std::vector<Vec2> actions;  // states.size() - 1 entries
  Provenance provenance = Provenance::kExpert;
  int iteration_born = 0;

  int length() const { return static_cast<int>(states.size()); }
};

/// Contiguous H-step slice: H+1 states and H actions.
struct SubTrajectory {
  std::vector<EnvState> states;
  std::vector<Vec2> actions;

  int horizon() const { return static_cast<int>(actions.size()); }
};

enum class ShiftLevel { kNone, kSmall, kMedium, kLarge };

inline const char* to_string(ShiftLevel s) {
  switch (s) {
    case ShiftLevel::kNone: return "none";
    case ShiftLevel::kSmall: return "small";
    case ShiftLevel::kMedium: return "medium";
    case ShiftLevel::kLarge: return "large";
  }
  return "?";
}

inline ShiftLevel shift_from_string(const std::string& s) {
  if (s == "none") return ShiftLevel::kNone;
  if (s == "small") return ShiftLevel::kSmall;
  if (s == "medium") return ShiftLevel::kMedium;
  if (s == "large") return ShiftLevel::kLarge;
  throw UsageError("unknown shift level '" + s + "'");
}

/// Train/eval goal regions as sets of free cells.
struct ShiftConfig {
  ShiftLevel level = ShiftLevel::kNone;
  std::vector<Cell> train_cells;
  std::vector<Cell> eval_cells;

  void validate() const {
    if (train_cells.empty() || eval_cells.empty())
      throw ConfigError("shift: regions must be nonempty");
    auto contains = [](const std::vector<Cell>& v, const Cell& c) {
      return std::find(v.begin(), v.end(), c) != v.end();
    };
    if (level == ShiftLevel::kNone) {
      if (train_cells != eval_cells)
        throw ConfigError("shift none: train and eval regions must match");
    }
    if (level == ShiftLevel::kLarge) {
      for (const Cell& c : eval_cells)
        if (contains(train_cells, c))
          throw ConfigError("shift large: regions must be disjoint");
    }
  }
};

/// Partition the free cells by corridor distance from the anchor (first free
/// cell in row-major order). The training region is the nearest 60%; eval
/// regions move outward with the shift level, ending at the farthest cells
/// for the large shift.
inline ShiftConfig make_shift_config(const MazeSpec& spec, ShiftLevel level) {
  const auto cells = spec.free_cells();
  if (cells.empty()) throw ConfigError("shift: maze has no free cells");
  const Cell anchor = cells.front();
  const auto dist = corridor_distances(spec, anchor);
  std::vector<Cell> order = cells;
  std::stable_sort(order.begin(), order.end(), [&](const Cell& a, const Cell& b) {
    return dist[static_cast<size_t>(a.row)][static_cast<size_t>(a.col)] <
           dist[static_cast<size_t>(b.row)][static_cast<size_t>(b.col)];
  });
  for (const Cell& c : order)
    if (dist[static_cast<size_t>(c.row)][static_cast<size_t>(c.col)] < 0)
      throw ConfigError("shift: maze free space is disconnected");
  const int n = static_cast<int>(order.size());
  const int m = std::max(1, (n * 3 + 4) / 5);  // ceil(0.6 n)
  auto slice = [&](int lo, int hi) {
    lo = std::max(0, lo);
    hi = std::min(n, hi);
    if (lo >= hi) lo = hi - 1;
    return std::vector<Cell>(order.begin() + lo, order.begin() + hi);
  };
  ShiftConfig cfg;
  cfg.level = level;
  cfg.train_cells = slice(0, m);
  const int tail = std::max(1, (n - m) / 2);
  switch (level) {
    case ShiftLevel::kNone:
      cfg.eval_cells = cfg.train_cells;
      break;
    case ShiftLevel::kSmall:
      // shares the upper half of the train region plus a little beyond
      cfg.eval_cells = slice(m / 2, m + std::max(1, (n - m) / 3));
      break;
    case ShiftLevel::kMedium:
      cfg.eval_cells = slice(m, m + tail);
      break;
    case ShiftLevel::kLarge:
      cfg.eval_cells = slice(n - tail, n);
      break;
  }
  cfg.validate();
  return cfg;
}

struct DatasetStore {
  std::vector<Trajectory> trajectories;
  uint64_t seed = 0;
  int skill_horizon = 1;
  float synthetic_mix_ratio = -1.0f;  // <0: uniform over all trajectories
  uint64_t maze_hash = 0;

  int size() const { return static_cast<int>(trajectories.size()); }
};

struct TrajectoryValidation {
  bool ok = true;
  std::string reason;
};

inline TrajectoryValidation validate_trajectory(const MazeSpec& spec, const Trajectory& t) {
  if (t.states.empty()) return {false, "empty trajectory"};
  if (t.actions.size() + 1 != t.states.size())
    return {false, "action/state length mismatch"};
  for (const EnvState& s : t.states)
    if (!state_valid(spec, s)) return {false, "invalid state"};
  for (const Vec2& a : t.actions)
    for (float v : a)
      if (!std::isfinite(v) || std::abs(v) > spec.action_max + 1e-4f)
        return {false, "action out of bounds"};
  return {};
}

// ---------------------------------------------------------------------------
// Expert generation: grid shortest path + PD waypoint tracking.
// ---------------------------------------------------------------------------

namespace detail {
constexpr float kPdKp = 2.0f;
constexpr float kPdKd = 1.2f;
constexpr float kWaypointRadius = 0.35f;
}  // namespace detail

/// Scripted PD action toward a waypoint; also the oracle policy used by
/// evaluation tests.
inline Vec2 pd_action(const EnvState& s, const Vec2& waypoint, float action_max = 1.0f) {
  Vec2 a;
  for (int i = 0; i < 2; ++i) {
    const float raw = detail::kPdKp * (waypoint[i] - s.pos[i]) - detail::kPdKd * s.vel[i];
    a[i] = std::min(action_max, std::max(-action_max, raw));
  }
  return a;
}

struct ExpertRollout {
  Trajectory traj;
  bool success = false;
};

/// Waypoint-tracking PD rollout from an exact state toward a goal. Stops as
/// soon as the goal ball is entered.
inline ExpertRollout expert_rollout_from(const MazeSpec& spec, const EnvConfig& cfg,
                                         const EnvState& start, const Goal& goal) {
  ExpertRollout out;
  out.traj.provenance = Provenance::kExpert;
  const auto path = shortest_cell_path(spec, spec.cell_at(start.pos), spec.cell_at(goal.pos));
  if (path.empty()) return out;
  const float stop_sq = std::min(cfg.success_radius * cfg.success_radius, 1.0f);
  EnvState s = start;
  out.traj.states.push_back(s);
  size_t wp = 0;
  for (int t = 0; t < cfg.horizon; ++t) {
    while (wp + 1 < path.size() &&
           sq_dist(s.pos, spec.cell_center(path[wp])) <
               detail::kWaypointRadius * detail::kWaypointRadius)
      ++wp;
    const Vec2 target = wp + 1 < path.size() ? spec.cell_center(path[wp]) : goal.pos;
    const Vec2 a = pd_action(s, target, spec.action_max);
    s = step(spec, s, a);
    out.traj.actions.push_back(a);
    out.traj.states.push_back(s);
    if (sq_dist(s.pos, goal.pos) <= stop_sq) {
      out.success = true;
      return out;
    }
  }
  return out;
}

/// One expert episode from start_cell to goal_cell with a jittered start.
/// Returns nothing if the goal is unreachable or not reached in time.
inline std::optional<Trajectory> generate_expert_trajectory(
    const MazeSpec& spec, const EnvConfig& cfg, const Cell& start_cell,
    const Cell& goal_cell, std::mt19937& rng) {
  std::uniform_real_distribution<float> jitter(-0.25f * spec.cell_size, 0.25f * spec.cell_size);
  Vec2 start = spec.cell_center(start_cell);
  start[0] += jitter(rng);
  start[1] += jitter(rng);
  if (!spec.is_free(start)) start = spec.cell_center(start_cell);
  ExpertRollout roll =
      expert_rollout_from(spec, cfg, reset(spec, start), Goal{spec.cell_center(goal_cell)});
  if (!roll.success) return std::nullopt;
  return std::move(roll.traj);
}

/// n successful expert trajectories between train-region cells. Episodes
/// that fail to reach the goal are resampled up to a retry bound.
inline DatasetStore generate_expert_dataset(const MazeSpec& spec, const ShiftConfig& shift,
                                            int n, uint64_t seed,
                                            const EnvConfig& cfg = EnvConfig{},
                                            int skill_horizon = 10) {
  if (n < 1) throw UsageError("generate_expert_dataset: n must be >= 1");
  shift.validate();
  DatasetStore store;
  store.seed = seed;
  store.skill_horizon = skill_horizon;
  store.maze_hash = spec.hash();
  std::mt19937 rng(static_cast<uint32_t>(derive_seed(seed, 0x0da7a)));
  std::uniform_int_distribution<size_t> pick(0, shift.train_cells.size() - 1);
  constexpr int kMaxRetries = 40;
  for (int i = 0; i < n; ++i) {
    bool done = false;
    for (int attempt = 0; attempt < kMaxRetries && !done; ++attempt) {
      const Cell start = shift.train_cells[pick(rng)];
      Cell goal = shift.train_cells[pick(rng)];
      if (shift.train_cells.size() > 1)
        while (goal == start) goal = shift.train_cells[pick(rng)];
      auto traj = generate_expert_trajectory(spec, cfg, start, goal, rng);
      if (traj) {
        store.trajectories.push_back(std::move(*traj));
        done = true;
      }
    }
    if (!done)
      throw DataError("generate_expert_dataset: goal region unreachable within retry bound");
  }
  return store;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct SampleRef {
  int traj = 0;
  int offset = 0;
};

/// Uniform (trajectory, offset) draw among trajectories long enough for an
/// H-step slice, honoring the configured synthetic mixing ratio.
inline SampleRef sample_ref(const DatasetStore& store, int H, std::mt19937& rng) {
  if (H < 1) throw UsageError("sample_ref: H must be >= 1");
  std::vector<int> expert_pool, synthetic_pool;
  for (int i = 0; i < store.size(); ++i) {
    if (store.trajectories[static_cast<size_t>(i)].length() < H + 1) continue;
    (store.trajectories[static_cast<size_t>(i)].provenance == Provenance::kExpert
         ? expert_pool
         : synthetic_pool)
        .push_back(i);
  }
  if (expert_pool.empty() && synthetic_pool.empty())
    throw DataError("sample_ref: no trajectory long enough for H=" + std::to_string(H));
  const std::vector<int>* pool = nullptr;
  if (store.synthetic_mix_ratio >= 0.0f && !expert_pool.empty() && !synthetic_pool.empty()) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    pool = u(rng) < store.synthetic_mix_ratio ? &synthetic_pool : &expert_pool;
  } else {
    static thread_local std::vector<int> all;
    all.clear();
    all.insert(all.end(), expert_pool.begin(), expert_pool.end());
    all.insert(all.end(), synthetic_pool.begin(), synthetic_pool.end());
    std::uniform_int_distribution<size_t> pick(0, all.size() - 1);
    const int traj = all[pick(rng)];
    const int max_off = store.trajectories[static_cast<size_t>(traj)].length() - 1 - H;
    std::uniform_int_distribution<int> off(0, max_off);
    return SampleRef{traj, off(rng)};
  }
  std::uniform_int_distribution<size_t> pick(0, pool->size() - 1);
  const int traj = (*pool)[pick(rng)];
  const int max_off = store.trajectories[static_cast<size_t>(traj)].length() - 1 - H;
  std::uniform_int_distribution<int> off(0, max_off);
  return SampleRef{traj, off(rng)};
}

inline SubTrajectory make_subtrajectory(const DatasetStore& store, const SampleRef& ref, int H) {
  const Trajectory& t = store.trajectories[static_cast<size_t>(ref.traj)];
  if (ref.offset < 0 || ref.offset + H > t.length() - 1)
    throw UsageError("make_subtrajectory: slice out of range");
  SubTrajectory sub;
  sub.states.assign(t.states.begin() + ref.offset, t.states.begin() + ref.offset + H + 1);
  sub.actions.assign(t.actions.begin() + ref.offset, t.actions.begin() + ref.offset + H);
  return sub;
}

inline SubTrajectory sample_subtrajectory(const DatasetStore& store, int H, std::mt19937& rng) {
  return make_subtrajectory(store, sample_ref(store, H, rng), H);
}

enum class RelabelMode { kFinal, kFuture };

/// Hindsight goal for the slice starting at offset t: the final state's
/// goal image, or a uniformly drawn future state at index >= t+H.
inline Goal relabel_goal(const Trajectory& traj, int t, RelabelMode mode, int H,
                         std::mt19937& rng) {
  if (t < 0 || t >= traj.length()) throw UsageError("relabel_goal: offset out of range");
  const int last = traj.length() - 1;
  if (mode == RelabelMode::kFuture && t + H <= last) {
    std::uniform_int_distribution<int> pick(t + H, last);
    return phi(traj.states[static_cast<size_t>(pick(rng))]);
  }
  return phi(traj.states[static_cast<size_t>(last)]);
}

// ---------------------------------------------------------------------------
// Synthetic ingestion & coverage
// ---------------------------------------------------------------------------

struct AppendResult {
  int appended = 0;
  int rejected = 0;
  std::vector<std::string> reasons;
};

/// Validate and append model-generated trajectories; invalid ones are
/// rejected individually with a diagnostic.
inline AppendResult append_synthetic(DatasetStore& store, const MazeSpec& spec,
                                     std::vector<Trajectory> trajs, int iteration) {
  AppendResult res;
  for (Trajectory& t : trajs) {
    const auto v = validate_trajectory(spec, t);
    if (!v.ok) {
      ++res.rejected;
      res.reasons.push_back(v.reason);
      continue;
    }
    t.provenance = Provenance::kSynthetic;
    t.iteration_born = iteration;
    store.trajectories.push_back(std::move(t));
    ++res.appended;
  }
  return res;
}

/// Number of distinct square bins touched by the goal image of any stored
/// state. `max_iteration` restricts to trajectories born at or before that
/// iteration (expert data counts as iteration 0).
inline int goal_coverage(const DatasetStore& store, float bin_size,
                         int max_iteration = std::numeric_limits<int>::max()) {
  if (store.trajectories.empty()) throw UsageError("goal_coverage: empty store");
  if (bin_size <= 0.0f) throw UsageError("goal_coverage: bin size must be positive");
  std::unordered_set<uint64_t> bins;
  for (const Trajectory& t : store.trajectories) {
    if (t.iteration_born > max_iteration) continue;
    for (const EnvState& s : t.states) {
      const Goal g = phi(s);
      const auto ix = static_cast<int64_t>(std::floor(g.pos[0] / bin_size));
      const auto iy = static_cast<int64_t>(std::floor(g.pos[1] / bin_size));
      bins.insert((static_cast<uint64_t>(ix) << 32) ^ (static_cast<uint64_t>(iy) & 0xffffffffull));
    }
  }
  return static_cast<int>(bins.size());
}

// ---------------------------------------------------------------------------
// Serialization: plain-text manifest + little-endian float32 records.
// ---------------------------------------------------------------------------

namespace detail {
inline void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw DataError("dataset: truncated file");
  return v;
}
inline void write_f32s(std::ostream& os, const float* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(float)));
}
inline void read_f32s(std::istream& is, float* p, size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(float)));
  if (!is) throw DataError("dataset: truncated file");
}
}  // namespace detail

inline void save_dataset(const DatasetStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("save_dataset: cannot open " + path);
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(store.maze_hash));
  os << "SKILLSTEP-DATASET v1\n"
     << "count " << store.size() << "\n"
     << "skill_horizon " << store.skill_horizon << "\n"
     << "maze_hash " << hex << "\n"
     << "seed " << store.seed << "\n"
     << "end\n";
  for (const Trajectory& t : store.trajectories) {
    detail::write_u32(os, static_cast<uint32_t>(t.states.size()));
    detail::write_u32(os, static_cast<uint32_t>(t.provenance));
    detail::write_u32(os, static_cast<uint32_t>(t.iteration_born));
    for (const EnvState& s : t.states) {
      const float rec[4] = {s.pos[0], s.pos[1], s.vel[0], s.vel[1]};
      detail::write_f32s(os, rec, 4);
    }
    for (const Vec2& a : t.actions) detail::write_f32s(os, a.data(), 2);
  }
  if (!os) throw DataError("save_dataset: write failure on " + path);
}

inline DatasetStore load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "SKILLSTEP-DATASET v1")
    throw DataError("load_dataset: bad magic in " + path);
  DatasetStore store;
  int count = -1;
  while (std::getline(is, line) && line != "end") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "count") ls >> count;
    else if (key == "skill_horizon") ls >> store.skill_horizon;
    else if (key == "maze_hash") { std::string h; ls >> h; store.maze_hash = std::stoull(h, nullptr, 16); }
    else if (key == "seed") ls >> store.seed;
    else throw DataError("load_dataset: unknown header key '" + key + "'");
    if (ls.fail()) throw DataError("load_dataset: bad header value for '" + key + "'");
  }
  if (count < 0) throw DataError("load_dataset: missing count");
  for (int i = 0; i < count; ++i) {
    Trajectory t;
    const uint32_t n_states = detail::read_u32(is);
    t.provenance = static_cast<Provenance>(detail::read_u32(is));
    t.iteration_born = static_cast<int>(detail::read_u32(is));
    if (n_states == 0 || n_states > (1u << 24))
      throw DataError("load_dataset: implausible trajectory length");
    t.states.resize(n_states);
    for (EnvState& s : t.states) {
      float rec[4];
      detail::read_f32s(is, rec, 4);
      s.pos = {rec[0], rec[1]};
      s.vel = {rec[2], rec[3]};
    }
    t.actions.resize(n_states - 1);
    for (Vec2& a : t.actions) detail::read_f32s(is, a.data(), 2);
    store.trajectories.push_back(std::move(t));
  }
  return store;
}

}  // namespace skillstep
