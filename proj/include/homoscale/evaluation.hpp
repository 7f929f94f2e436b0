#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "homoscale/homography.hpp"

namespace homoscale {

struct EvalRecord {
  std::string pair_id;
  std::string category;
  double pme = 0.0;                  // mean of per_point_errors
  std::vector<double> per_point_errors;
};

/// Point matching error: mean Euclidean distance between apply(h, src) and
/// the labeled target points.
EvalRecord pme(const Homography& h, const Correspondences& pts,
               std::string pair_id = {}, std::string category = {});

struct RobustnessCurve {
  std::vector<double> thresholds;    // ascending
  std::vector<double> proportions;   // inliers (error < t) / N
};

/// Inlier proportions at each threshold with the strict inequality rule.
RobustnessCurve inlier_curve(const std::vector<double>& errors,
                             const std::vector<double>& thresholds);

/// Default threshold sweep 1.0, 2.0, ..., 50.0.
std::vector<double> default_thresholds();

struct CategoryRow {
  std::string name;                       // method label
  std::map<std::string, double> means;    // per category
  double avg = 0.0;                       // unweighted mean of category means
};

struct CategoryTable {
  std::vector<std::string> categories;    // column order
  std::vector<CategoryRow> rows;
  std::optional<CategoryRow> baseline;    // reference for the (+x%) columns
};

/// Per-category mean PME plus the unweighted average column; when a
/// baseline row is supplied every cell also carries the relative change
/// against the baseline's value in that column, computed from the
/// two-decimal rounded means the table displays.
CategoryTable category_report(const std::vector<EvalRecord>& records,
                              const std::string& method_name,
                              const std::optional<CategoryRow>& baseline = {});

/// Formats a value cell, optionally with the "(+x.xx%)" relative column.
std::string format_cell(double value, std::optional<double> baseline);

std::string render_table_text(const CategoryTable& table);
std::string render_table_csv(const CategoryTable& table);

std::string render_curve_csv(const RobustnessCurve& curve);
std::string render_curve_svg(const RobustnessCurve& curve);

}  // namespace homoscale
