#include "forecaster/planner.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace forecaster {

namespace {

void expand(const PlannerModels& models, PlanNode& node, std::uint64_t node_id, const PlannerSettings& settings,
            std::uint64_t plan_seed, std::size_t* abstract_calls) {
  if (node.depth >= settings.depth) return;
  const int X = settings.branching;
  Rng rng{node_stream_seed(plan_seed, node_id)};
  std::vector<GoalCode> codes;
  codes.reserve(static_cast<std::size_t>(X));
  for (int c = 0; c < X; ++c) codes.push_back(models.manager.sample(node.latent, settings.greedy ? nullptr : &rng));
  const Matrix goals = models.codec.decode_goal(codes);
  const Matrix latents = node.latent.replicate(1, X);
  const auto [next, rewards] = models.abstract_model.predict_abstract(latents, goals);
  if (abstract_calls) *abstract_calls += static_cast<std::size_t>(X);
  node.children.resize(static_cast<std::size_t>(X));
  // Sibling subtrees are independent (own substreams), so expansion order
  // does not affect the result.
  for (int c = 0; c < X; ++c) {
    PlanNode& child = node.children[static_cast<std::size_t>(c)];
    child.latent = next.col(c);
    child.incoming_goal = goals.col(c);
    child.incoming_code = codes[static_cast<std::size_t>(c)];
    child.edge_reward = rewards[c];
    child.depth = node.depth + 1;
    expand(models, child, node_id * static_cast<std::uint64_t>(X) + static_cast<std::uint64_t>(c) + 1, settings,
           plan_seed, abstract_calls);
  }
}

void collect(const PlanNode& node, PlanPath& prefix, Scalar weight, Scalar discount, std::vector<PlanPath>& out) {
  if (node.children.empty()) {
    out.push_back(prefix);
    return;
  }
  for (const auto& child : node.children) {
    prefix.codes.push_back(*child.incoming_code);
    prefix.goals.push_back(*child.incoming_goal);
    prefix.edge_rewards.push_back(child.edge_reward);
    const Scalar saved = prefix.score;
    prefix.score += weight * child.edge_reward;
    collect(child, prefix, weight * discount, discount, out);
    prefix.score = saved;
    prefix.codes.pop_back();
    prefix.goals.pop_back();
    prefix.edge_rewards.pop_back();
  }
}

std::string code_string(const GoalCode& code) {
  std::string s;
  for (std::size_t i = 0; i < code.indices.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(code.indices[i]);
  }
  return s;
}

std::string real_string(Scalar v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void dump_edges(const PlanNode& node, std::ostringstream& os) {
  for (const auto& child : node.children) {
    os << std::string(static_cast<std::size_t>(2 * (child.depth - 1)), ' ') << "edge depth=" << child.depth
       << " code=" << code_string(*child.incoming_code) << " reward=" << real_string(child.edge_reward) << '\n';
    dump_edges(child, os);
  }
}

}  // namespace

std::uint64_t node_stream_seed(std::uint64_t plan_seed, std::uint64_t node_id) {
  return mix_seed(plan_seed, node_id);
}

PlanNode build_tree(const PlannerModels& models, const Vector& root_latent, const PlannerSettings& settings,
                    std::uint64_t plan_seed, std::size_t* abstract_calls) {
  if (settings.branching < 1 || settings.depth < 1) {
    throw ConfigError("build_tree: X and m must be >= 1");
  }
  PlanNode root;
  root.latent = root_latent;
  expand(models, root, 0, settings, plan_seed, abstract_calls);
  return root;
}

std::vector<PlanPath> enumerate_paths(const PlanNode& root, Scalar discount) {
  std::vector<PlanPath> out;
  PlanPath prefix;
  collect(root, prefix, 1.0, discount, out);
  if (root.children.empty()) out.clear();
  return out;
}

std::size_t select_path_index(const std::vector<PlanPath>& paths) {
  if (paths.empty()) throw UsageError("select_goal: no paths to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < paths.size(); ++i)
    if (paths[i].score > paths[best].score) best = i;
  return best;
}

std::pair<GoalCode, Vector> select_goal(const std::vector<PlanPath>& paths) {
  const PlanPath& best = paths[select_path_index(paths)];
  if (best.codes.empty()) throw UsageError("select_goal: path has no edges");
  return {best.codes.front(), best.goals.front()};
}

std::size_t count_edges(const PlanNode& root) {
  std::size_t n = root.children.size();
  for (const auto& c : root.children) n += count_edges(c);
  return n;
}

std::string dump_tree(const PlanNode& root, const PlannerSettings& settings) {
  std::ostringstream os;
  os << "plan X=" << settings.branching << " m=" << settings.depth
     << " discount=" << real_string(settings.discount) << '\n';
  dump_edges(root, os);
  const auto paths = enumerate_paths(root, settings.discount);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    os << "path " << i << " score=" << real_string(paths[i].score) << " codes=";
    for (std::size_t j = 0; j < paths[i].codes.size(); ++j) {
      if (j) os << '/';
      os << code_string(paths[i].codes[j]);
    }
    os << '\n';
  }
  if (!paths.empty()) os << "selected path=" << select_path_index(paths) << '\n';
  return os.str();
}

std::vector<DumpedEdge> parse_dump_edges(const std::string& text) {
  std::vector<DumpedEdge> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word != "edge") continue;
    DumpedEdge e;
    std::string field;
    while (ls >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw UsageError("plan dump: malformed field '" + field + "'");
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      if (key == "depth") {
        e.depth = std::stoi(value);
      } else if (key == "reward") {
        e.reward = std::stod(value);
      } else if (key == "code") {
        std::istringstream cs(value);
        std::string idx;
        while (std::getline(cs, idx, ',')) e.code.push_back(std::stoi(idx));
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace forecaster
