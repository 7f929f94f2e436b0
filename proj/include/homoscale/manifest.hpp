#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "homoscale/homography.hpp"

namespace homoscale {

/// One dataset pair: image paths, optional human-labeled point
/// correspondences, scene category, and optional validity-mask paths.
struct DatasetRecord {
  std::string source;
  std::string target;
  Correspondences points;
  std::string category;
  std::optional<std::string> source_mask;
  std::optional<std::string> target_mask;
};

inline const std::vector<std::string>& known_categories() {
  static const std::vector<std::string> cats{"RE-L", "LT-L", "LL-L",
                                             "SF-L", "LF-L", "synthetic"};
  return cats;
}

struct ManifestParseResult {
  std::vector<DatasetRecord> records;
  std::vector<std::string> warnings;  // labeled pairs below the 6-point floor
};

/// Parses and validates a manifest (a JSON list of records). Labeled pairs
/// need at least 4 points; fewer than 6 draws a warning.
ManifestParseResult parse_manifest(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path,
                    const std::vector<DatasetRecord>& records);

}  // namespace homoscale
