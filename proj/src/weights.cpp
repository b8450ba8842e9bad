#include "cptree/weights.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "cptree/error.hpp"
#include "cptree/stats.hpp"

namespace cptree {

namespace {

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

double parse_double(std::string_view text, std::string_view what) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || first == last)
    throw ValidationError("malformed " + std::string(what) + " '" + std::string(text) + "'");
  return value;
}

}  // namespace

WeightDistribution::WeightDistribution(std::vector<WeightAtom> support, double bound_m)
    : support_(std::move(support)), bound_m_(bound_m) {
  require(!support_.empty(), "weight distribution has no atoms");
  require(std::isfinite(bound_m_) && bound_m_ > 0.0, "bound M must be a positive real");
  KahanSum total;
  bool positive_mass = false;
  for (const auto& atom : support_) {
    require(std::isfinite(atom.value) && atom.value >= 0.0, "weight values must be nonnegative");
    require(atom.value <= bound_m_, "weight value " + format_double(atom.value) + " exceeds bound M = " +
                                        format_double(bound_m_));
    require(atom.probability >= 0.0 && atom.probability <= 1.0, "atom probabilities must lie in [0,1]");
    total.add(atom.probability);
    if (atom.value > 0.0 && atom.probability > 0.0) positive_mass = true;
  }
  require(std::abs(total.value() - 1.0) <= 1e-12, "atom probabilities must sum to 1");
  require(positive_mass, "assumption mu(rho>0)>0 violated: the weight law puts no mass on positive values");
  double running = 0.0;
  cdf_.reserve(support_.size());
  for (const auto& atom : support_) {
    running += atom.probability;
    cdf_.push_back(running);
  }
  cdf_.back() = 1.0;
}

WeightDistribution WeightDistribution::constant(double value) {
  return WeightDistribution({{value, 1.0}}, value);
}

WeightDistribution WeightDistribution::parse(std::string_view spec, double bound_m) {
  std::vector<WeightAtom> atoms;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const std::size_t comma = std::min(spec.find(',', pos), spec.size());
    const std::string_view piece = spec.substr(pos, comma - pos);
    const std::size_t colon = piece.find(':');
    if (colon == std::string_view::npos)
      throw ValidationError("malformed distribution entry '" + std::string(piece) + "' (expected value:prob)");
    atoms.push_back({parse_double(piece.substr(0, colon), "weight value"),
                     parse_double(piece.substr(colon + 1), "probability")});
    pos = comma + 1;
  }
  if (bound_m <= 0.0) {
    for (const auto& a : atoms) bound_m = std::max(bound_m, a.value);
    if (bound_m <= 0.0)
      throw ValidationError("assumption mu(rho>0)>0 violated: the weight law puts no mass on positive values");
  }
  return WeightDistribution(std::move(atoms), bound_m);
}

double WeightDistribution::moment(unsigned k) const {
  KahanSum s;
  for (const auto& atom : support_) s.add(atom.probability * std::pow(atom.value, static_cast<double>(k)));
  return s.value();
}

std::size_t WeightDistribution::quantile_index(double u) const {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  std::size_t j = static_cast<std::size_t>(it - cdf_.begin());
  if (j >= support_.size()) j = support_.size() - 1;
  // Zero-probability atoms are never selected: upper_bound skips flat CDF steps.
  return j;
}

std::string WeightDistribution::to_string() const {
  std::string out;
  for (std::size_t j = 0; j < support_.size(); ++j) {
    if (j) out.push_back(',');
    out += format_double(support_[j].value) + ":" + format_double(support_[j].probability);
  }
  return out;
}

QuenchedEnvironment::QuenchedEnvironment(std::uint64_t master_seed, WeightDistribution distribution)
    : seed_(master_seed), dist_(std::move(distribution)), root_key_(derive_seed(master_seed, {tag::environment})) {}

double QuenchedEnvironment::weight_of(const VertexId& v) const {
  std::uint64_t key = root_key_;
  for (auto digit : v.digits()) key = child_key(key, digit);
  return weight_for_key(key);
}

}  // namespace cptree
