#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cptree {

/// Vertex of the rooted regular tree T^d, addressed by its path from the
/// root: the root is the empty path, child j of v appends digit j.
/// The root has d neighbours; every other vertex has d + 1.
class VertexId {
 public:
  using Digit = std::uint16_t;

  VertexId() = default;
  explicit VertexId(std::vector<Digit> digits) : digits_(std::move(digits)) {}

  static VertexId root() { return {}; }

  bool is_root() const { return digits_.empty(); }
  std::size_t depth() const { return digits_.size(); }
  const std::vector<Digit>& digits() const { return digits_; }

  VertexId child(Digit j) const;

  /// "ε" for the root, otherwise dot-joined digits ("0.1.1").
  std::string to_string() const;
  static VertexId parse(std::string_view text);

  friend bool operator==(const VertexId&, const VertexId&) = default;
  friend auto operator<=>(const VertexId&, const VertexId&) = default;

 private:
  std::vector<Digit> digits_;
};

/// Degree parameter d of T^d (number of children of every vertex).
void validate_degree(unsigned d);

std::vector<VertexId> children(const VertexId& v, unsigned d);
std::optional<VertexId> parent(const VertexId& v);
/// Children plus parent when v is not the root.
std::vector<VertexId> neighbors(const VertexId& v, unsigned d);

/// Graph distance d_T(u, v).
std::size_t distance(const VertexId& u, const VertexId& v);

/// All vertices of depth <= max_depth, indexed breadth-first: the root is 0,
/// children of index i are d*i + 1 ... d*i + d. Vertices at max_depth have no
/// children (the boundary absorbs nothing and emits nothing downward).
class TruncatedTree {
 public:
  TruncatedTree(unsigned d, unsigned max_depth);

  unsigned degree() const { return d_; }
  unsigned max_depth() const { return max_depth_; }
  std::size_t size() const { return size_; }

  std::size_t depth_of(std::size_t index) const;
  std::optional<std::size_t> parent_of(std::size_t index) const;
  /// Empty for boundary vertices.
  std::vector<std::size_t> children_of(std::size_t index) const;
  std::vector<std::size_t> neighbors_of(std::size_t index) const;

  VertexId vertex(std::size_t index) const;
  std::optional<std::size_t> index_of(const VertexId& v) const;

  /// Number of vertices for (d, max_depth) without constructing the tree.
  static std::size_t count(unsigned d, unsigned max_depth);

 private:
  unsigned d_;
  unsigned max_depth_;
  std::size_t size_;
  std::vector<std::size_t> level_start_;
};

}  // namespace cptree
