#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cptree::cli {

inline constexpr const char* kToolName = "cptree";
inline constexpr const char* kVersion = "1.0.0";

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kValidationFailure = 2;
inline constexpr int kBudgetFailure = 3;

/// Runs the tool on `args` (without the program name). Results go to `out`
/// (or to a file, see --out and CPTREE_OUT_DIR); a single-line diagnostic
/// goes to `err` on failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double x);

/// Flat "key = value" lines; '#' starts a comment. ValidationError on
/// malformed lines or repeated keys.
std::map<std::string, std::string> parse_config(std::istream& in);

}  // namespace cptree::cli
