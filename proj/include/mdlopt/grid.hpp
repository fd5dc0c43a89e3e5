#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdlopt/errors.hpp"
#include "mdlopt/io/container.hpp"
#include "mdlopt/rng.hpp"

// Multi-task 10x10 grid world: pick up an instructed sequence of objects.
namespace mdlopt::grid {

constexpr int kSize = 10;
constexpr int kCells = kSize * kSize;
constexpr int kNumObjectTypes = 10;
constexpr int kObsPlanes = kNumObjectTypes + 2;  // agent, walls, one per type
constexpr int kObsDim = kObsPlanes * kCells;
constexpr int kNumActions = 5;
constexpr int kObjectsPerTask = 6;
constexpr int kEpisodeLimit = 50;

enum Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kPickup = 4 };

enum class RewardMode { kSparse, kDense };

inline int cell_index(int y, int x) { return y * kSize + x; }

struct GridTask {
  std::array<uint8_t, kCells> walls{};            // 1 = impassable
  std::vector<std::pair<int, int>> objects;       // (cell, type), distinct types
  int agent_start = 0;
  std::vector<int> instructions;                  // ordered types to pick up
};

struct TaskConfig {
  int n_pick = 3;
  int n_obj = kNumObjectTypes;
  float wall_density = 0.1f;
  int max_retries = 200;
};

namespace detail {

// Reachable set from `start` over non-wall cells (4-neighborhood).
inline std::array<uint8_t, kCells> flood_fill(const std::array<uint8_t, kCells>& walls,
                                              int start) {
  std::array<uint8_t, kCells> seen{};
  std::deque<int> queue{start};
  seen[start] = 1;
  while (!queue.empty()) {
    int c = queue.front();
    queue.pop_front();
    int y = c / kSize, x = c % kSize;
    const int ny[4] = {y - 1, y + 1, y, y};
    const int nx[4] = {x, x, x - 1, x + 1};
    for (int i = 0; i < 4; ++i) {
      if (ny[i] < 0 || ny[i] >= kSize || nx[i] < 0 || nx[i] >= kSize) continue;
      int n = cell_index(ny[i], nx[i]);
      if (walls[n] || seen[n]) continue;
      seen[n] = 1;
      queue.push_back(n);
    }
  }
  return seen;
}

}  // namespace detail

// Sample a task: random inner walls, 6 objects of distinct types at random
// free cells, a random agent start, and an ordered instruction list over
// placed types. Re-samples until every instructed object is reachable.
inline GridTask sample_task(uint64_t seed, const TaskConfig& cfg = {}) {
  if (cfg.n_pick < 1 || cfg.n_pick > kObjectsPerTask)
    throw ArgumentError("n_pick must be in [1, 6]");
  if (cfg.n_obj < kObjectsPerTask || cfg.n_obj > kNumObjectTypes)
    throw ArgumentError("n_obj must be in [6, 10]");
  if (cfg.wall_density < 0.0f || cfg.wall_density >= 1.0f)
    throw ArgumentError("wall_density must be in [0, 1)");

  Rng rng(derive_seed(seed, 0x6D1Du));
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    GridTask task;
    // walls only on non-border cells
    for (int y = 1; y < kSize - 1; ++y)
      for (int x = 1; x < kSize - 1; ++x)
        if (rng.uniform() < cfg.wall_density) task.walls[cell_index(y, x)] = 1;

    std::vector<int> free_cells;
    for (int c = 0; c < kCells; ++c)
      if (!task.walls[c]) free_cells.push_back(c);
    if (free_cells.size() < kObjectsPerTask + 1) continue;

    rng.shuffle(free_cells);
    std::vector<int> types(cfg.n_obj);
    for (int i = 0; i < cfg.n_obj; ++i) types[i] = i;
    rng.shuffle(types);

    for (int i = 0; i < kObjectsPerTask; ++i) task.objects.emplace_back(free_cells[i], types[i]);
    task.agent_start = free_cells[kObjectsPerTask];

    std::vector<int> placed_types(types.begin(), types.begin() + kObjectsPerTask);
    rng.shuffle(placed_types);
    task.instructions.assign(placed_types.begin(), placed_types.begin() + cfg.n_pick);

    auto reachable = detail::flood_fill(task.walls, task.agent_start);
    bool ok = true;
    for (int instr : task.instructions) {
      for (const auto& [cell, type] : task.objects)
        if (type == instr && !reachable[cell]) ok = false;
    }
    if (ok) return task;
  }
  throw RuntimeFailure("sample_task: no reachable layout found within retry budget");
}

struct StepResult {
  float reward = 0.0f;
  bool done = false;
};

// Mutable episode state over a fixed task. Single-owner; run one instance
// per rollout worker.
class GridEnv {
 public:
  GridEnv(GridTask task, RewardMode mode) : task_(std::move(task)), mode_(mode) { reset(); }

  void reset() {
    agent_ = task_.agent_start;
    present_.assign(task_.objects.size(), 1);
    next_instr_ = 0;
    steps_ = 0;
    done_ = false;
  }

  const GridTask& task() const { return task_; }
  int agent_cell() const { return agent_; }
  int step_count() const { return steps_; }
  int picked_count() const { return next_instr_; }
  bool done() const { return done_; }
  int n_pick() const { return static_cast<int>(task_.instructions.size()); }

  // Type of the next object to pick up; one-hot encodable in [0, N_obj).
  int instruction() const {
    return done_ || next_instr_ >= n_pick() ? 0 : task_.instructions[next_instr_];
  }

  // Binary observation planes as a float feature row (plane-major).
  Eigen::RowVectorXf observation() const {
    Eigen::RowVectorXf obs = Eigen::RowVectorXf::Zero(kObsDim);
    obs(0 * kCells + agent_) = 1.0f;
    for (int c = 0; c < kCells; ++c)
      if (task_.walls[c]) obs(1 * kCells + c) = 1.0f;
    for (size_t i = 0; i < task_.objects.size(); ++i)
      if (present_[i]) obs((2 + task_.objects[i].second) * kCells + task_.objects[i].first) = 1.0f;
    return obs;
  }

  void observation_u8(uint8_t* out) const {
    std::fill(out, out + kObsDim, 0);
    out[0 * kCells + agent_] = 1;
    for (int c = 0; c < kCells; ++c)
      if (task_.walls[c]) out[1 * kCells + c] = 1;
    for (size_t i = 0; i < task_.objects.size(); ++i)
      if (present_[i]) out[(2 + task_.objects[i].second) * kCells + task_.objects[i].first] = 1;
  }

  StepResult step(int action) {
    if (action < 0 || action >= kNumActions) throw ArgumentError("action out of range");
    if (done_) throw RuntimeFailure("step() on a finished episode");
    ++steps_;
    float reward = 0.0f;
    if (action == kPickup) {
      for (size_t i = 0; i < task_.objects.size(); ++i) {
        if (present_[i] && task_.objects[i].first == agent_ &&
            task_.objects[i].second == task_.instructions[next_instr_]) {
          present_[i] = 0;
          ++next_instr_;
          bool all_done = next_instr_ >= n_pick();
          if (mode_ == RewardMode::kDense) reward = 1.0f;
          else if (all_done) reward = 1.0f;
          if (all_done) done_ = true;
          break;
        }
      }
      // mismatched or empty-cell pickup: no-op, reward 0
    } else {
      int y = agent_ / kSize, x = agent_ % kSize;
      int ny = y + (action == kDown) - (action == kUp);
      int nx = x + (action == kRight) - (action == kLeft);
      if (ny >= 0 && ny < kSize && nx >= 0 && nx < kSize && !task_.walls[cell_index(ny, nx)])
        agent_ = cell_index(ny, nx);
    }
    if (steps_ >= kEpisodeLimit) done_ = true;
    return {reward, done_};
  }

 private:
  GridTask task_;
  RewardMode mode_;
  std::vector<uint8_t> present_;
  int agent_ = 0;
  int next_instr_ = 0;
  int steps_ = 0;
  bool done_ = false;
};

// One demonstration: observations (instruction-free planes) and actions.
struct Trajectory {
  int length = 0;
  std::vector<uint8_t> obs;      // length * kObsDim, plane-major per step
  std::vector<uint8_t> actions;  // length

  const uint8_t* obs_at(int t) const { return obs.data() + static_cast<size_t>(t) * kObsDim; }
};

namespace detail {

// BFS shortest path (deterministic: neighbor order up/down/left/right).
// Returns the action sequence, empty if start == goal.
inline std::optional<std::vector<int>> bfs_path(const std::array<uint8_t, kCells>& walls,
                                                int start, int goal) {
  if (start == goal) return std::vector<int>{};
  std::array<int, kCells> parent_action;
  parent_action.fill(-1);
  std::array<int, kCells> parent_cell;
  parent_cell.fill(-1);
  std::deque<int> queue{start};
  std::array<uint8_t, kCells> seen{};
  seen[start] = 1;
  while (!queue.empty()) {
    int c = queue.front();
    queue.pop_front();
    int y = c / kSize, x = c % kSize;
    const int dy[4] = {-1, 1, 0, 0};
    const int dx[4] = {0, 0, -1, 1};
    for (int a = 0; a < 4; ++a) {
      int ny = y + dy[a], nx = x + dx[a];
      if (ny < 0 || ny >= kSize || nx < 0 || nx >= kSize) continue;
      int n = cell_index(ny, nx);
      if (walls[n] || seen[n]) continue;
      seen[n] = 1;
      parent_cell[n] = c;
      parent_action[n] = a;
      if (n == goal) {
        std::vector<int> actions;
        for (int cur = goal; cur != start; cur = parent_cell[cur])
          actions.push_back(parent_action[cur]);
        std::reverse(actions.begin(), actions.end());
        return actions;
      }
      queue.push_back(n);
    }
  }
  return std::nullopt;
}

}  // namespace detail

// Expert demonstration: for each instruction in order, walk a shortest
// wall-avoiding path to the object, then pick it up. Recorded observations
// never include the instruction.
struct Demo {
  Trajectory trajectory;
  std::vector<int> true_boundaries;  // 1-indexed; {1} plus post-pickup steps
};

inline Demo bfs_demonstrate(const GridTask& task) {
  GridEnv env(task, RewardMode::kDense);
  Demo demo;
  std::vector<int> pickup_steps;
  for (int instr : task.instructions) {
    int target_cell = -1;
    for (const auto& [cell, type] : task.objects)
      if (type == instr) target_cell = cell;
    if (target_cell < 0) throw RuntimeFailure("bfs_demonstrate: instructed type not placed");
    auto path = detail::bfs_path(task.walls, env.agent_cell(), target_cell);
    if (!path) throw RuntimeFailure("bfs_demonstrate: instructed object unreachable");
    std::vector<int> actions = *path;
    actions.push_back(kPickup);
    for (int a : actions) {
      std::vector<uint8_t> planes(kObsDim);
      env.observation_u8(planes.data());
      demo.trajectory.obs.insert(demo.trajectory.obs.end(), planes.begin(), planes.end());
      demo.trajectory.actions.push_back(static_cast<uint8_t>(a));
      ++demo.trajectory.length;
      env.step(a);
    }
    pickup_steps.push_back(demo.trajectory.length);  // 1-indexed step of the pickup
  }
  demo.true_boundaries.push_back(1);
  for (size_t i = 0; i + 1 < pickup_steps.size(); ++i)
    demo.true_boundaries.push_back(pickup_steps[i] + 1);
  return demo;
}

// ---------------------------------------------------------------------------
// demonstration corpus

struct DemoCorpus {
  uint64_t seed = 0;
  int n_pick = 3;
  std::vector<GridTask> tasks;
  std::vector<Demo> demos;
};

inline DemoCorpus generate_demo_corpus(uint64_t seed, int n_demos, int n_pick) {
  if (n_demos < 1) throw ArgumentError("n_demos must be >= 1");
  TaskConfig cfg;
  cfg.n_pick = n_pick;
  DemoCorpus corpus;
  corpus.seed = seed;
  corpus.n_pick = n_pick;
  corpus.tasks.reserve(static_cast<size_t>(n_demos));
  corpus.demos.reserve(static_cast<size_t>(n_demos));
  for (int i = 0; i < n_demos; ++i) {
    GridTask task = sample_task(derive_seed(seed, 0xDE30000u + static_cast<uint64_t>(i)), cfg);
    corpus.tasks.push_back(task);
    corpus.demos.push_back(bfs_demonstrate(task));
  }
  return corpus;
}

inline void write_demo_corpus(const DemoCorpus& corpus, const std::string& path) {
  io::Container c(io::ContainerKind::kDemoCorpus);
  c.meta()["seed"] = corpus.seed;
  c.meta()["n_pick"] = corpus.n_pick;
  c.meta()["n_demos"] = corpus.demos.size();
  c.meta()["obs_dim"] = kObsDim;

  std::vector<uint8_t> obs, actions, walls;
  std::vector<uint64_t> offsets;  // step offset per episode + total
  std::vector<int32_t> boundaries, boundary_offsets, objects, starts, instr, instr_offsets;
  uint64_t off = 0;
  int32_t boff = 0, ioff = 0;
  for (size_t i = 0; i < corpus.demos.size(); ++i) {
    const auto& d = corpus.demos[i];
    const auto& task = corpus.tasks[i];
    offsets.push_back(off);
    off += static_cast<uint64_t>(d.trajectory.length);
    obs.insert(obs.end(), d.trajectory.obs.begin(), d.trajectory.obs.end());
    actions.insert(actions.end(), d.trajectory.actions.begin(), d.trajectory.actions.end());
    boundary_offsets.push_back(boff);
    for (int b : d.true_boundaries) boundaries.push_back(b);
    boff += static_cast<int32_t>(d.true_boundaries.size());
    walls.insert(walls.end(), task.walls.begin(), task.walls.end());
    for (const auto& [cell, type] : task.objects) {
      objects.push_back(cell);
      objects.push_back(type);
    }
    starts.push_back(task.agent_start);
    instr_offsets.push_back(ioff);
    for (int t : task.instructions) instr.push_back(t);
    ioff += static_cast<int32_t>(task.instructions.size());
  }
  offsets.push_back(off);
  boundary_offsets.push_back(boff);
  instr_offsets.push_back(ioff);

  c.put_u8("obs", obs);
  c.put_u8("actions", actions);
  c.put_u64("episode_offsets", offsets);
  c.put_i32("boundaries", boundaries);
  c.put_i32("boundary_offsets", boundary_offsets);
  c.put_u8("task_walls", walls);
  c.put_i32("task_objects", objects);
  c.put_i32("task_starts", starts);
  c.put_i32("task_instructions", instr);
  c.put_i32("task_instruction_offsets", instr_offsets);
  c.write(path);
}

inline DemoCorpus read_demo_corpus(const std::string& path) {
  io::Container c = io::Container::read(path, io::ContainerKind::kDemoCorpus);
  DemoCorpus corpus;
  corpus.seed = c.meta().at("seed").get<uint64_t>();
  corpus.n_pick = c.meta().at("n_pick").get<int>();
  size_t n = c.meta().at("n_demos").get<size_t>();

  auto obs = c.get_u8("obs");
  auto actions = c.get_u8("actions");
  auto offsets = c.get_u64("episode_offsets");
  auto boundaries = c.get_i32("boundaries");
  auto boundary_offsets = c.get_i32("boundary_offsets");
  auto walls = c.get_u8("task_walls");
  auto objects = c.get_i32("task_objects");
  auto starts = c.get_i32("task_starts");
  auto instr = c.get_i32("task_instructions");
  auto instr_offsets = c.get_i32("task_instruction_offsets");
  if (offsets.size() != n + 1 || boundary_offsets.size() != n + 1 || instr_offsets.size() != n + 1 ||
      walls.size() != n * kCells || objects.size() != n * kObjectsPerTask * 2 ||
      starts.size() != n)
    throw CorruptFileError("demo corpus: index blob size mismatch");

  for (size_t i = 0; i < n; ++i) {
    Demo d;
    uint64_t start = offsets[i], end = offsets[i + 1];
    if (end < start || end * kObsDim > obs.size() || end > actions.size())
      throw CorruptFileError("demo corpus: episode offsets out of range");
    d.trajectory.length = static_cast<int>(end - start);
    d.trajectory.obs.assign(obs.begin() + static_cast<long>(start) * kObsDim,
                            obs.begin() + static_cast<long>(end) * kObsDim);
    d.trajectory.actions.assign(actions.begin() + static_cast<long>(start),
                                actions.begin() + static_cast<long>(end));
    for (int32_t b = boundary_offsets[i]; b < boundary_offsets[i + 1]; ++b)
      d.true_boundaries.push_back(boundaries.at(static_cast<size_t>(b)));
    corpus.demos.push_back(std::move(d));

    GridTask task;
    std::copy(walls.begin() + static_cast<long>(i) * kCells,
              walls.begin() + static_cast<long>(i + 1) * kCells, task.walls.begin());
    for (int j = 0; j < kObjectsPerTask; ++j)
      task.objects.emplace_back(objects[(i * kObjectsPerTask + j) * 2],
                                objects[(i * kObjectsPerTask + j) * 2 + 1]);
    task.agent_start = starts[i];
    for (int32_t t = instr_offsets[i]; t < instr_offsets[i + 1]; ++t)
      task.instructions.push_back(instr.at(static_cast<size_t>(t)));
    corpus.tasks.push_back(std::move(task));
  }
  return corpus;
}

}  // namespace mdlopt::grid
