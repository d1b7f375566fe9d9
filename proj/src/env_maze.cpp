#include "forecaster/env_maze.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace forecaster {

namespace {

constexpr std::array<int, 4> kDRow = {-1, 0, 1, 0};
constexpr std::array<int, 4> kDCol = {0, 1, 0, -1};

int side_length(MazeSize size) { return size == MazeSize::S ? 9 : 15; }

}  // namespace

MazeSize parse_maze_size(const std::string& s) {
  if (s == "S" || s == "s") return MazeSize::S;
  if (s == "M" || s == "m") return MazeSize::M;
  throw ConfigError("unknown maze size '" + s + "' (expected S or M)");
}

std::string to_string(MazeSize s) { return s == MazeSize::S ? "S" : "M"; }

int default_max_episode_steps(MazeSize size) { return size == MazeSize::S ? 400 : 1000; }

bool MazeLayout::is_wall(int row, int col) const {
  if (row < 0 || col < 0 || row >= height || col >= width) return true;
  return walls[static_cast<std::size_t>(row * width + col)] != 0;
}

std::string MazeLayout::to_text() const {
  std::string out;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const Cell cell{r, c};
      if (cell == start) {
        out += 'S';
      } else if (cell == goal) {
        out += 'G';
      } else {
        out += is_wall(r, c) ? '#' : '.';
      }
    }
    out += '\n';
  }
  return out;
}

MazeLayout MazeLayout::from_text(const std::string& text) {
  MazeLayout layout;
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) rows.push_back(line);
  }
  if (rows.empty()) throw ConfigError("maze text is empty");
  layout.height = static_cast<int>(rows.size());
  layout.width = static_cast<int>(rows.front().size());
  layout.walls.assign(static_cast<std::size_t>(layout.width * layout.height), 1);
  bool has_start = false;
  bool has_goal = false;
  for (int r = 0; r < layout.height; ++r) {
    if (static_cast<int>(rows[r].size()) != layout.width) {
      throw ConfigError("maze row " + std::to_string(r) + " has inconsistent width");
    }
    for (int c = 0; c < layout.width; ++c) {
      const char ch = rows[r][c];
      auto& w = layout.walls[static_cast<std::size_t>(r * layout.width + c)];
      switch (ch) {
        case '#':
          w = 1;
          break;
        case '.':
          w = 0;
          break;
        case 'S':
          w = 0;
          layout.start = {r, c};
          has_start = true;
          break;
        case 'G':
          w = 0;
          layout.goal = {r, c};
          has_goal = true;
          break;
        default:
          throw ConfigError(std::string("maze text: unexpected character '") + ch + "'");
      }
    }
  }
  if (!has_start || !has_goal) throw ConfigError("maze text needs both 'S' and 'G'");
  layout.validate();
  return layout;
}

void MazeLayout::validate() const {
  if (width <= 0 || height <= 0 || walls.size() != static_cast<std::size_t>(width * height)) {
    throw ConfigError("maze: inconsistent dimensions");
  }
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const bool border = r == 0 || c == 0 || r == height - 1 || c == width - 1;
      if (border && !is_wall(r, c)) throw ConfigError("maze: border cell is open");
    }
  }
  if (!is_open(start) || !is_open(goal)) throw ConfigError("maze: start or goal is a wall");
  if (oracle_shortest_path(*this) < 0) throw ConfigError("maze: goal unreachable from start");
}

MazeLayout generate(MazeSize size, std::uint64_t seed) {
  const int n = side_length(size);
  Rng rng{mix_seed(seed, hash_name(size == MazeSize::S ? "maze/S" : "maze/M"))};
  MazeLayout layout;
  layout.width = n;
  layout.height = n;
  layout.seed = seed;
  layout.walls.assign(static_cast<std::size_t>(n * n), 1);
  auto open = [&](int r, int c) { layout.walls[static_cast<std::size_t>(r * n + c)] = 0; };

  const int lattice = (n - 1) / 2;
  std::vector<Cell> lattice_cells;
  for (int i = 0; i < lattice; ++i)
    for (int j = 0; j < lattice; ++j) lattice_cells.push_back({2 * i + 1, 2 * j + 1});

  const Cell first = lattice_cells[uniform_index(rng, lattice_cells.size())];
  std::vector<std::uint8_t> visited(static_cast<std::size_t>(n * n), 0);
  std::vector<Cell> stack{first};
  visited[static_cast<std::size_t>(first.row * n + first.col)] = 1;
  open(first.row, first.col);
  while (!stack.empty()) {
    const Cell cur = stack.back();
    std::array<int, 4> candidates{};
    int count = 0;
    for (int d = 0; d < 4; ++d) {
      const int r = cur.row + 2 * kDRow[d];
      const int c = cur.col + 2 * kDCol[d];
      if (r > 0 && c > 0 && r < n - 1 && c < n - 1 && !visited[static_cast<std::size_t>(r * n + c)])
        candidates[count++] = d;
    }
    if (count == 0) {
      stack.pop_back();
      continue;
    }
    const int d = candidates[uniform_index(rng, static_cast<std::size_t>(count))];
    const Cell next{cur.row + 2 * kDRow[d], cur.col + 2 * kDCol[d]};
    open(cur.row + kDRow[d], cur.col + kDCol[d]);
    open(next.row, next.col);
    visited[static_cast<std::size_t>(next.row * n + next.col)] = 1;
    stack.push_back(next);
  }

  layout.start = lattice_cells[uniform_index(rng, lattice_cells.size())];
  do {
    layout.goal = lattice_cells[uniform_index(rng, lattice_cells.size())];
  } while (layout.goal == layout.start);
  // The backtracker yields a spanning tree, so the goal is always reachable;
  // validate() re-checks it by search anyway.
  layout.validate();
  return layout;
}

int oracle_shortest_path(const MazeLayout& layout) {
  std::vector<int> dist(static_cast<std::size_t>(layout.width * layout.height), -1);
  std::deque<Cell> queue{layout.start};
  dist[static_cast<std::size_t>(layout.start.row * layout.width + layout.start.col)] = 0;
  while (!queue.empty()) {
    const Cell cur = queue.front();
    queue.pop_front();
    const int d0 = dist[static_cast<std::size_t>(cur.row * layout.width + cur.col)];
    if (cur == layout.goal) return d0;
    for (int d = 0; d < 4; ++d) {
      const Cell next{cur.row + kDRow[d], cur.col + kDCol[d]};
      if (layout.is_wall(next.row, next.col)) continue;
      auto& slot = dist[static_cast<std::size_t>(next.row * layout.width + next.col)];
      if (slot >= 0) continue;
      slot = d0 + 1;
      queue.push_back(next);
    }
  }
  return -1;
}

std::vector<int> oracle_action_plan(const MazeLayout& layout) {
  // BFS over (cell, heading) poses with the environment's own action semantics.
  const int poses = layout.width * layout.height * 4;
  auto index = [&](Cell c, int h) { return (c.row * layout.width + c.col) * 4 + h; };
  std::vector<int> parent(static_cast<std::size_t>(poses), -1);
  std::vector<int> parent_action(static_cast<std::size_t>(poses), -1);
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(poses), 0);
  std::deque<std::pair<Cell, int>> queue{{layout.start, kNorth}};
  seen[static_cast<std::size_t>(index(layout.start, kNorth))] = 1;
  int found = -1;
  while (!queue.empty()) {
    const auto [cell, h] = queue.front();
    queue.pop_front();
    if (cell == layout.goal) {
      found = index(cell, h);
      break;
    }
    for (int a = 0; a < kActionCount; ++a) {
      Cell nc = cell;
      int nh = h;
      if (a == kForward) {
        const Cell fwd{cell.row + kDRow[h], cell.col + kDCol[h]};
        if (!layout.is_wall(fwd.row, fwd.col)) nc = fwd;
      } else if (a == kTurnLeft) {
        nh = (h + 3) % 4;
      } else {
        nh = (h + 1) % 4;
      }
      const int ni = index(nc, nh);
      if (seen[static_cast<std::size_t>(ni)]) continue;
      seen[static_cast<std::size_t>(ni)] = 1;
      parent[static_cast<std::size_t>(ni)] = index(cell, h);
      parent_action[static_cast<std::size_t>(ni)] = a;
      queue.push_back({nc, nh});
    }
  }
  std::vector<int> plan;
  if (found < 0) return plan;
  for (int cur = found; parent[static_cast<std::size_t>(cur)] >= 0;
       cur = parent[static_cast<std::size_t>(cur)]) {
    plan.push_back(parent_action[static_cast<std::size_t>(cur)]);
  }
  std::reverse(plan.begin(), plan.end());
  return plan;
}

Vector Observation::flat() const {
  Vector v(kObservationSize);
  v << patch, proprio;
  return v;
}

MazeEnv::MazeEnv(MazeLayout layout, int max_episode_steps)
    : layout_(std::move(layout)), max_steps_(max_episode_steps), pos_(layout_.start) {
  if (max_steps_ <= 0) throw ConfigError("max_episode_steps must be positive");
  layout_.validate();
}

Observation MazeEnv::reset() {
  pos_ = layout_.start;
  heading_ = kNorth;
  steps_ = 0;
  done_ = false;
  return observe();
}

void MazeEnv::set_pose(Cell pos, int heading) {
  if (!layout_.is_open(pos) || heading < 0 || heading > 3) {
    throw UsageError("set_pose: invalid pose");
  }
  pos_ = pos;
  heading_ = heading;
  steps_ = 0;
  done_ = false;
}

Observation MazeEnv::observe() const {
  Observation obs;
  obs.patch = Vector::Zero(kPatchSize);
  obs.proprio = Vector::Zero(kProprioSize);
  obs.proprio[heading_] = 1.0;
  const int right = (heading_ + 1) % 4;
  for (int r = 0; r < kWindow; ++r) {
    for (int c = 0; c < kWindow; ++c) {
      const int ahead = kViewRadius - r;
      const int side = c - kViewRadius;
      const int wr = pos_.row + ahead * kDRow[heading_] + side * kDRow[right];
      const int wc = pos_.col + ahead * kDCol[heading_] + side * kDCol[right];
      if (layout_.is_wall(wr, wc)) {
        obs.patch[patch_index(0, r, c)] = 1.0;
      } else {
        obs.patch[patch_index(1, r, c)] = 1.0;
        if (Cell{wr, wc} == layout_.goal) obs.patch[patch_index(2, r, c)] = 1.0;
      }
    }
  }
  return obs;
}

Transition MazeEnv::step(int action) {
  if (done_) throw UsageError("MazeEnv::step called on a terminal episode; call reset()");
  if (action < 0 || action >= kActionCount) {
    throw UsageError("MazeEnv::step: invalid action " + std::to_string(action));
  }
  Transition t;
  t.observation = observe();
  t.action = action;
  switch (action) {
    case kForward: {
      const Cell next{pos_.row + kDRow[heading_], pos_.col + kDCol[heading_]};
      if (!layout_.is_wall(next.row, next.col)) pos_ = next;
      break;
    }
    case kTurnLeft:
      heading_ = (heading_ + 3) % 4;
      break;
    case kTurnRight:
      heading_ = (heading_ + 1) % 4;
      break;
  }
  ++steps_;
  if (pos_ == layout_.goal) {
    t.reward = 1.0;
    t.terminal = true;
  } else if (steps_ >= max_steps_) {
    t.terminal = true;
    t.truncated = true;
  }
  done_ = t.terminal;
  t.next_observation = observe();
  return t;
}

}  // namespace forecaster
