#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "cptree/tree.hpp"
#include "cptree/weights.hpp"

namespace cptree {

/// The part of T^d an infinite-volume simulation has touched. Vertices are
/// materialised in sibling blocks of d on demand and carry their cached
/// weight; nothing else of the tree is stored.
class LazyTree {
 public:
  using Index = std::uint32_t;
  static constexpr Index kNone = std::numeric_limits<Index>::max();

  struct Node {
    std::uint64_t key;
    double weight;
    Index parent;
    Index first_child;
    std::uint32_t depth;
    std::uint16_t digit;
  };

  /// truncation: vertices at this depth get no children.
  LazyTree(unsigned d, std::optional<unsigned> truncation = std::nullopt);

  /// Drops everything but the root and rebinds to `env`.
  void reset(const QuenchedEnvironment& env);

  unsigned degree() const { return d_; }
  std::optional<unsigned> truncation() const { return truncation_; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(Index n) const { return nodes_[n]; }
  double weight(Index n) const { return nodes_[n].weight; }

  /// First of the d contiguous children, materialising them if needed;
  /// kNone at the truncation boundary.
  Index ensure_children(Index n);
  /// kNone when not materialised (or at the boundary).
  Index first_child(Index n) const { return nodes_[n].first_child; }
  bool is_boundary(Index n) const { return truncation_ && nodes_[n].depth >= *truncation_; }

  /// Index for v, materialising the path; nullopt if v is beyond the truncation.
  std::optional<Index> locate(const VertexId& v);
  VertexId vertex(Index n) const;

  /// Calls f(neighbor) for the parent and every materialised child.
  template <class F>
  void for_each_neighbor(Index n, F&& f) const {
    const Node& nd = nodes_[n];
    if (nd.parent != kNone) f(nd.parent);
    if (nd.first_child != kNone)
      for (Index c = nd.first_child; c < nd.first_child + d_; ++c) f(c);
  }

 private:
  unsigned d_;
  std::optional<unsigned> truncation_;
  const QuenchedEnvironment* env_ = nullptr;
  std::vector<Node> nodes_;
};

}  // namespace cptree
