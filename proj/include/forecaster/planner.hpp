#pragma once

#include "forecaster/abstract_wm.hpp"
#include "forecaster/goal_codec.hpp"
#include "forecaster/hierarchy.hpp"

#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace forecaster {

struct PlanNode {
  Vector latent;
  std::optional<Vector> incoming_goal;
  std::optional<GoalCode> incoming_code;
  Scalar edge_reward = 0.0;
  int depth = 0;
  std::vector<PlanNode> children;
};

struct PlanPath {
  std::vector<GoalCode> codes;
  std::vector<Vector> goals;
  std::vector<Scalar> edge_rewards;
  Scalar score = 0.0;
};

struct PlannerModels {
  const Manager& manager;
  const GoalCodec& codec;
  const AbstractWorldModel& abstract_model;
};

struct PlannerSettings {
  int branching = 3;       // X
  int depth = 2;           // m
  Scalar discount = 0.9;   // per-decision discount, gamma^K
  bool greedy = false;     // argmax candidates instead of sampling
};

/// Seed of the candidate-sampling substream of the node with breadth-first
/// index `node_id` (root 0, child c of node n is n * X + c + 1).
std::uint64_t node_stream_seed(std::uint64_t plan_seed, std::uint64_t node_id);

/// Complete X-ary tree of depth m. Each edge samples z ~ mgr(.|s) on the
/// node's substream, decodes g = dec(z) and steps (s', r) = f(s, g).
/// `abstract_calls`, when given, is incremented once per edge.
PlanNode build_tree(const PlannerModels& models, const Vector& root_latent, const PlannerSettings& settings,
                    std::uint64_t plan_seed, std::size_t* abstract_calls = nullptr);

/// Root-to-leaf paths in depth-first, child-index order, scored by
/// sum_i discount^i * edge_reward_i.
std::vector<PlanPath> enumerate_paths(const PlanNode& root, Scalar discount);

/// First goal of the best-scoring path; ties go to the lowest path index.
/// Throws UsageError on an empty path set.
std::pair<GoalCode, Vector> select_goal(const std::vector<PlanPath>& paths);
std::size_t select_path_index(const std::vector<PlanPath>& paths);

std::size_t count_edges(const PlanNode& root);

/// Indented text dump: one `edge` line per tree edge, then one `path` line
/// per enumerated path and the selected index.
std::string dump_tree(const PlanNode& root, const PlannerSettings& settings);

struct DumpedEdge {
  int depth = 0;
  std::vector<int> code;
  Scalar reward = 0.0;
};

/// Parses the `edge` lines of dump_tree output.
std::vector<DumpedEdge> parse_dump_edges(const std::string& text);

}  // namespace forecaster
