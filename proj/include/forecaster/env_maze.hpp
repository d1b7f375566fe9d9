#pragma once

#include "forecaster/common.hpp"

#include <array>
#include <string>
#include <vector>

namespace forecaster {

enum class MazeSize { S, M };

MazeSize parse_maze_size(const std::string& s);
std::string to_string(MazeSize s);

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct MazeLayout {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> walls;  // row-major, 1 = wall
  Cell start;
  Cell goal;
  std::uint64_t seed = 0;

  bool is_wall(int row, int col) const;
  bool is_open(const Cell& c) const { return !is_wall(c.row, c.col); }

  /// Text form: '#' wall, '.' open, 'S' start, 'G' goal, one row per line.
  std::string to_text() const;
  static MazeLayout from_text(const std::string& text);

  /// Checks border walls, open start/goal and reachability; throws ConfigError.
  void validate() const;
};

/// Recursive-backtracker maze on the odd-cell lattice. S is 9x9, M is 15x15.
MazeLayout generate(MazeSize size, std::uint64_t seed);

/// BFS distance (in cells) from start to goal; -1 when unreachable.
int oracle_shortest_path(const MazeLayout& layout);

/// BFS action sequence (forward/turn) that reaches the goal from the reset pose.
std::vector<int> oracle_action_plan(const MazeLayout& layout);

inline constexpr int kViewRadius = 2;
inline constexpr int kWindow = 2 * kViewRadius + 1;
inline constexpr int kChannels = 3;  // wall, open, goal
inline constexpr int kPatchSize = kChannels * kWindow * kWindow;
inline constexpr int kProprioSize = 4;
inline constexpr int kObservationSize = kPatchSize + kProprioSize;
inline constexpr int kActionCount = 3;

enum Action : int { kForward = 0, kTurnLeft = 1, kTurnRight = 2 };
enum Heading : int { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };

struct Observation {
  Vector patch;    // channel-major: channel * W * W + row * W + col, row 0 is ahead
  Vector proprio;  // heading one-hot

  /// Concatenated model input of length kObservationSize.
  Vector flat() const;
  friend bool operator==(const Observation& a, const Observation& b) {
    return a.patch == b.patch && a.proprio == b.proprio;
  }
};

inline int patch_index(int channel, int row, int col) {
  return channel * kWindow * kWindow + row * kWindow + col;
}

struct Transition {
  Observation observation;
  int action = 0;
  Scalar reward = 0.0;
  Observation next_observation;
  bool terminal = false;
  bool truncated = false;  // terminal because the step budget ran out
};

int default_max_episode_steps(MazeSize size);

/// Egocentric gridworld. Single-threaded; instances share no state.
class MazeEnv {
 public:
  MazeEnv(MazeLayout layout, int max_episode_steps);

  Observation reset();
  Transition step(int action);

  const MazeLayout& layout() const { return layout_; }
  Cell position() const { return pos_; }
  int heading() const { return heading_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  int max_episode_steps() const { return max_steps_; }

  /// Teleport (for fixtures); clears the terminal flag and step counter.
  void set_pose(Cell pos, int heading);

  Observation observe() const;

 private:
  MazeLayout layout_;
  int max_steps_;
  Cell pos_;
  int heading_ = kNorth;
  int steps_ = 0;
  bool done_ = true;
};

}  // namespace forecaster
