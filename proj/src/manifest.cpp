#include "homoscale/manifest.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "homoscale/errors.hpp"
#include "homoscale/io.hpp"

namespace homoscale {

namespace {

DatasetRecord parse_record(const nlohmann::json& j, std::size_t index,
                           std::vector<std::string>& warnings) {
  const std::string where = "record " + std::to_string(index);
  if (!j.is_object()) throw ParseError(where + ": not an object");
  DatasetRecord r;
  try {
    r.source = j.at("source").get<std::string>();
    r.target = j.at("target").get<std::string>();
    r.category = j.at("category").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  const auto& cats = known_categories();
  if (std::find(cats.begin(), cats.end(), r.category) == cats.end())
    throw ValidationError(where + ": unknown category \"" + r.category + "\"");

  if (j.contains("points")) {
    if (!j["points"].is_array())
      throw ParseError(where + ": \"points\" must be an array");
    for (const auto& p : j["points"]) {
      if (!p.is_array() || p.size() != 4)
        throw ParseError(where + ": each point is [xs, ys, xt, yt]");
      Correspondence c;
      c.src = {p[0].get<double>(), p[1].get<double>()};
      c.tgt = {p[2].get<double>(), p[3].get<double>()};
      if (!c.src.allFinite() || !c.tgt.allFinite())
        throw ValidationError(where + ": points must be finite");
      r.points.push_back(c);
    }
    if (!r.points.empty() && r.points.size() < 4)
      throw ValidationError(where + ": labeled pairs need at least 4 points");
    if (!r.points.empty() && r.points.size() < 6)
      warnings.push_back(where + ": only " + std::to_string(r.points.size()) +
                         " labeled points (6 recommended)");
  }
  if (j.contains("source_mask")) r.source_mask = j["source_mask"].get<std::string>();
  if (j.contains("target_mask")) r.target_mask = j["target_mask"].get<std::string>();
  return r;
}

}  // namespace

ManifestParseResult parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("manifest " + path.string() + ": " + e.what());
  }
  if (!j.is_array())
    throw ParseError("manifest " + path.string() + ": expected a JSON list");

  ManifestParseResult result;
  for (std::size_t i = 0; i < j.size(); ++i)
    result.records.push_back(parse_record(j[i], i, result.warnings));
  return result;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<DatasetRecord>& records) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json rec;
    rec["source"] = r.source;
    rec["target"] = r.target;
    rec["category"] = r.category;
    if (!r.points.empty()) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : r.points)
        pts.push_back({p.src.x(), p.src.y(), p.tgt.x(), p.tgt.y()});
      rec["points"] = pts;
    }
    if (r.source_mask) rec["source_mask"] = *r.source_mask;
    if (r.target_mask) rec["target_mask"] = *r.target_mask;
    j.push_back(rec);
  }
  write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace homoscale
