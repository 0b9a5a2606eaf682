#include "hyptk/app/tree.hpp"

#include <deque>

#include "hyptk/errors.hpp"

namespace hyp::app {

std::int64_t tree_size(std::int64_t depth, std::int64_t branching) {
  std::int64_t total = 0, level = 1;
  for (std::int64_t r = 0; r <= depth; ++r) {
    total += level;
    level *= branching;
  }
  return total;
}

Tree generate_tree(std::int64_t depth, std::int64_t branching) {
  if (depth < 1) throw ConfigError("tree depth must be at least 1");
  if (branching < 2) throw ConfigError("tree branching must be at least 2");
  Tree t;
  t.depth = depth;
  t.branching = branching;
  t.parent.push_back(-1);
  t.level.push_back(0);
  for (std::int64_t node = 0; node < static_cast<std::int64_t>(t.parent.size()); ++node) {
    if (t.level[node] == depth) continue;
    for (std::int64_t k = 0; k < branching; ++k) {
      const auto child = static_cast<std::int64_t>(t.parent.size());
      t.parent.push_back(node);
      t.level.push_back(t.level[node] + 1);
      t.edges.emplace_back(node, child);
    }
  }
  return t;
}

std::vector<std::int64_t> Tree::graph_distances() const {
  const std::int64_t n = size();
  std::vector<std::vector<std::int64_t>> adj(static_cast<std::size_t>(n));
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<std::int64_t> dist(static_cast<std::size_t>(n * n), -1);
  for (std::int64_t s = 0; s < n; ++s) {
    std::int64_t* row = dist.data() + s * n;
    std::deque<std::int64_t> queue{s};
    row[s] = 0;
    while (!queue.empty()) {
      const std::int64_t u = queue.front();
      queue.pop_front();
      for (std::int64_t v : adj[u]) {
        if (row[v] < 0) {
          row[v] = row[u] + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return dist;
}

std::string Tree::label(std::int64_t node) const {
  if (node < 0 || node >= size()) throw ContractError("tree node out of range");
  if (node == 0) return "root";
  std::string path;
  for (std::int64_t v = node; parent[v] >= 0; v = parent[v]) {
    const std::int64_t first_sibling = parent[v] * branching + 1;
    const std::string step = std::to_string(v - first_sibling);
    path = path.empty() ? step : step + "." + path;
  }
  return path;
}

}  // namespace hyp::app
