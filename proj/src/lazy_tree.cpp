#include "cptree/lazy_tree.hpp"

#include <algorithm>

#include "cptree/error.hpp"

namespace cptree {

LazyTree::LazyTree(unsigned d, std::optional<unsigned> truncation) : d_(d), truncation_(truncation) {
  validate_degree(d);
}

void LazyTree::reset(const QuenchedEnvironment& env) {
  env_ = &env;
  nodes_.clear();
  const std::uint64_t key = env.root_key();
  nodes_.push_back(Node{key, env.weight_for_key(key), kNone, kNone, 0, 0});
}

LazyTree::Index LazyTree::ensure_children(Index n) {
  if (nodes_[n].first_child != kNone) return nodes_[n].first_child;
  if (is_boundary(n)) return kNone;
  if (nodes_.size() + d_ >= kNone) throw BudgetError("lazy tree exceeded 2^32 vertices");
  const auto first = static_cast<Index>(nodes_.size());
  const std::uint64_t parent_key = nodes_[n].key;
  const std::uint32_t depth = nodes_[n].depth + 1;
  for (unsigned j = 0; j < d_; ++j) {
    const std::uint64_t key = QuenchedEnvironment::child_key(parent_key, j);
    nodes_.push_back(Node{key, env_->weight_for_key(key), n, kNone, depth, static_cast<std::uint16_t>(j)});
  }
  nodes_[n].first_child = first;
  return first;
}

std::optional<LazyTree::Index> LazyTree::locate(const VertexId& v) {
  if (truncation_ && v.depth() > *truncation_) return std::nullopt;
  Index n = 0;
  for (auto digit : v.digits()) {
    require(digit < d_, "vertex digit out of range for this degree");
    n = ensure_children(n) + digit;
  }
  return n;
}

VertexId LazyTree::vertex(Index n) const {
  std::vector<VertexId::Digit> digits;
  while (nodes_[n].parent != kNone) {
    digits.push_back(nodes_[n].digit);
    n = nodes_[n].parent;
  }
  std::reverse(digits.begin(), digits.end());
  return VertexId(std::move(digits));
}

}  // namespace cptree
