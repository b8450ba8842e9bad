#include "cptree/tree.hpp"

#include <algorithm>
#include <charconv>
#include <limits>

#include "cptree/error.hpp"

namespace cptree {

VertexId VertexId::child(Digit j) const {
  std::vector<Digit> next = digits_;
  next.push_back(j);
  return VertexId(std::move(next));
}

std::string VertexId::to_string() const {
  if (digits_.empty()) return "ε";
  std::string out;
  for (std::size_t i = 0; i < digits_.size(); ++i) {
    if (i) out.push_back('.');
    out += std::to_string(digits_[i]);
  }
  return out;
}

VertexId VertexId::parse(std::string_view text) {
  if (text == "ε" || text.empty()) return root();
  std::vector<Digit> digits;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t dot = std::min(text.find('.', pos), text.size());
    const std::string_view piece = text.substr(pos, dot - pos);
    unsigned value = 0;
    const auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), value);
    if (ec != std::errc{} || ptr != piece.data() + piece.size() || piece.empty() ||
        value > std::numeric_limits<Digit>::max())
      throw ValidationError("malformed vertex id '" + std::string(text) + "'");
    digits.push_back(static_cast<Digit>(value));
    pos = dot + 1;
  }
  return VertexId(std::move(digits));
}

void validate_degree(unsigned d) {
  require(d >= 2, "degree d must be at least 2");
  require(d <= std::numeric_limits<VertexId::Digit>::max(), "degree d too large");
}

std::vector<VertexId> children(const VertexId& v, unsigned d) {
  validate_degree(d);
  std::vector<VertexId> out;
  out.reserve(d);
  for (unsigned j = 0; j < d; ++j) out.push_back(v.child(static_cast<VertexId::Digit>(j)));
  return out;
}

std::optional<VertexId> parent(const VertexId& v) {
  if (v.is_root()) return std::nullopt;
  std::vector<VertexId::Digit> digits = v.digits();
  digits.pop_back();
  return VertexId(std::move(digits));
}

std::vector<VertexId> neighbors(const VertexId& v, unsigned d) {
  std::vector<VertexId> out = children(v, d);
  if (auto p = parent(v)) out.push_back(std::move(*p));
  return out;
}

std::size_t distance(const VertexId& u, const VertexId& v) {
  const auto& a = u.digits();
  const auto& b = v.digits();
  const auto [ia, ib] = std::mismatch(a.begin(), a.end(), b.begin(), b.end());
  const auto common = static_cast<std::size_t>(ia - a.begin());
  return (a.size() - common) + (b.size() - common);
}

std::size_t TruncatedTree::count(unsigned d, unsigned max_depth) {
  std::size_t total = 0;
  std::size_t level = 1;
  for (unsigned k = 0; k <= max_depth; ++k) {
    total += level;
    if (k < max_depth) {
      if (level > std::numeric_limits<std::size_t>::max() / d) return std::numeric_limits<std::size_t>::max();
      level *= d;
    }
  }
  return total;
}

TruncatedTree::TruncatedTree(unsigned d, unsigned max_depth) : d_(d), max_depth_(max_depth) {
  validate_degree(d);
  size_ = count(d, max_depth);
  require(size_ <= (std::size_t{1} << 32), "truncated tree too large");
  std::size_t start = 0;
  std::size_t level = 1;
  for (unsigned k = 0; k <= max_depth; ++k) {
    level_start_.push_back(start);
    start += level;
    level *= d;
  }
  level_start_.push_back(start);
}

std::size_t TruncatedTree::depth_of(std::size_t index) const {
  const auto it = std::upper_bound(level_start_.begin(), level_start_.end(), index);
  return static_cast<std::size_t>(it - level_start_.begin()) - 1;
}

std::optional<std::size_t> TruncatedTree::parent_of(std::size_t index) const {
  if (index == 0) return std::nullopt;
  return (index - 1) / d_;
}

std::vector<std::size_t> TruncatedTree::children_of(std::size_t index) const {
  std::vector<std::size_t> out;
  if (depth_of(index) >= max_depth_) return out;
  out.reserve(d_);
  for (unsigned j = 1; j <= d_; ++j) out.push_back(d_ * index + j);
  return out;
}

std::vector<std::size_t> TruncatedTree::neighbors_of(std::size_t index) const {
  std::vector<std::size_t> out = children_of(index);
  if (auto p = parent_of(index)) out.push_back(*p);
  return out;
}

VertexId TruncatedTree::vertex(std::size_t index) const {
  std::vector<VertexId::Digit> digits;
  while (index != 0) {
    digits.push_back(static_cast<VertexId::Digit>((index - 1) % d_));
    index = (index - 1) / d_;
  }
  std::reverse(digits.begin(), digits.end());
  return VertexId(std::move(digits));
}

std::optional<std::size_t> TruncatedTree::index_of(const VertexId& v) const {
  if (v.depth() > max_depth_) return std::nullopt;
  std::size_t index = 0;
  for (auto digit : v.digits()) {
    if (digit >= d_) return std::nullopt;
    index = d_ * index + digit + 1;
  }
  return index;
}

}  // namespace cptree
