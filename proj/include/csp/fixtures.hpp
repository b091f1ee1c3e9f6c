#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace csp {

struct FixtureReport {
  std::vector<std::string> checked;
  std::vector<std::string> problems;
  bool passed() const { return problems.empty(); }
};

/// Hashes every file listed in <root>/MANIFEST.json, then loads the stream at
/// <root>/stream/stream.json and executes every sample's SQL.
FixtureReport verify_fixtures(const std::filesystem::path& root);

/// Manifest body for the files under root (sorted, MANIFEST.json excluded).
std::string build_manifest(const std::filesystem::path& root);

}  // namespace csp
