#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hyp::app {

// Balanced tree with nodes numbered in breadth-first order; node 0 is the root.
struct Tree {
  std::int64_t depth = 0;
  std::int64_t branching = 0;
  std::vector<std::int64_t> parent;  // parent[0] == -1
  std::vector<std::int64_t> level;
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;

  std::int64_t size() const { return static_cast<std::int64_t>(parent.size()); }
  // Row-major size() x size() matrix of shortest-path lengths.
  std::vector<std::int64_t> graph_distances() const;
  // "root" for node 0, otherwise the dotted child-index path, e.g. "1.0".
  std::string label(std::int64_t node) const;
};

// (b^(r+1) - 1) / (b - 1) nodes for branching b and depth r.
std::int64_t tree_size(std::int64_t depth, std::int64_t branching);

Tree generate_tree(std::int64_t depth, std::int64_t branching);

}  // namespace hyp::app
