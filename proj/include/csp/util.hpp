#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace csp {

using json = nlohmann::json;

/// xoshiro256** seeded through splitmix64. The output sequence depends only
/// on the seed; the std distributions are implementation-defined, so bounded
/// draws and shuffles are done here instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();
  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_[4];
};

std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::string trim(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

json read_json_file(const std::filesystem::path& path);
/// One compact JSON object per line; object keys come out sorted.
std::string to_jsonl(const std::vector<json>& records);
std::vector<json> parse_jsonl(std::string_view text, const std::string& origin = "<jsonl>");

}  // namespace csp
