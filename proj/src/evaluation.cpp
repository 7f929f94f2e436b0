#include "homoscale/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "homoscale/errors.hpp"

namespace homoscale {

EvalRecord pme(const Homography& h, const Correspondences& pts,
               std::string pair_id, std::string category) {
  if (pts.empty()) throw EmptyInput("PME needs at least one labeled pair");
  EvalRecord r;
  r.pair_id = std::move(pair_id);
  r.category = std::move(category);
  double acc = 0.0;
  for (const auto& p : pts) {
    if (!p.src.allFinite() || !p.tgt.allFinite())
      throw ValidationError("labeled points must be finite");
    const double e = (apply(h, p.src) - p.tgt).norm();
    r.per_point_errors.push_back(e);
    acc += e;
  }
  r.pme = acc / static_cast<double>(pts.size());
  return r;
}

RobustnessCurve inlier_curve(const std::vector<double>& errors,
                             const std::vector<double>& thresholds) {
  if (errors.empty()) throw EmptyInput("inlier curve needs errors");
  if (thresholds.empty()) throw EmptyInput("inlier curve needs thresholds");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i] <= thresholds[i - 1])
      throw ValidationError("thresholds must be strictly ascending");
  RobustnessCurve c;
  c.thresholds = thresholds;
  for (const double t : thresholds) {
    std::int64_t inliers = 0;
    for (const double e : errors)
      if (e < t) ++inliers;  // strict inequality
    c.proportions.push_back(static_cast<double>(inliers) /
                            static_cast<double>(errors.size()));
  }
  return c;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 50; ++i) t.push_back(static_cast<double>(i));
  return t;
}

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

CategoryTable category_report(const std::vector<EvalRecord>& records,
                              const std::string& method_name,
                              const std::optional<CategoryRow>& baseline) {
  CategoryTable table;
  std::map<std::string, std::pair<double, int>> sums;
  for (const auto& r : records) {
    auto& s = sums[r.category];
    s.first += r.pme;
    s.second += 1;
  }
  CategoryRow row;
  row.name = method_name;
  double avg_acc = 0.0;
  for (const auto& [cat, s] : sums) {
    table.categories.push_back(cat);
    row.means[cat] = s.first / s.second;
    avg_acc += row.means[cat];
  }
  row.avg = sums.empty() ? 0.0 : avg_acc / static_cast<double>(sums.size());
  table.rows.push_back(row);
  table.baseline = baseline;
  return table;
}

std::string format_cell(double value, std::optional<double> baseline) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << value;
  if (baseline && *baseline != 0.0) {
    // Relative change computed from the displayed (rounded) values, matching
    // the presentation convention of the percentage columns.
    const double pct =
        (round2(value) - round2(*baseline)) / round2(*baseline) * 100.0;
    out << " (" << (pct >= 0 ? "+" : "") << std::fixed << std::setprecision(2)
        << pct << "%)";
  }
  return out.str();
}

namespace {

std::vector<std::vector<std::string>> table_cells(const CategoryTable& t) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"method"};
  for (const auto& c : t.categories) header.push_back(c);
  header.push_back("Avg");
  cells.push_back(header);

  const auto emit_row = [&](const CategoryRow& row, bool relative) {
    std::vector<std::string> line{row.name};
    for (const auto& c : t.categories) {
      const auto it = row.means.find(c);
      std::optional<double> base;
      if (relative && t.baseline) {
        const auto bit = t.baseline->means.find(c);
        if (bit != t.baseline->means.end()) base = bit->second;
      }
      line.push_back(it == row.means.end() ? std::string("-")
                                           : format_cell(it->second, base));
    }
    std::optional<double> base_avg;
    if (relative && t.baseline) base_avg = t.baseline->avg;
    line.push_back(format_cell(row.avg, base_avg));
    cells.push_back(line);
  };

  if (t.baseline) emit_row(*t.baseline, false);
  for (const auto& row : t.rows) emit_row(row, true);
  return cells;
}

}  // namespace

std::string render_table_text(const CategoryTable& table) {
  const auto cells = table_cells(table);
  std::vector<std::size_t> widths;
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (widths.size() <= i) widths.push_back(0);
      widths[i] = std::max(widths[i], row[i].size());
    }
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << std::left << std::setw(static_cast<int>(widths[i]) + 2) << row[i];
    }
    out << "\n";
  }
  return out.str();
}

std::string render_table_csv(const CategoryTable& table) {
  const auto cells = table_cells(table);
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ",";
      const bool quote = row[i].find(',') != std::string::npos;
      if (quote) out << '"' << row[i] << '"';
      else out << row[i];
    }
    out << "\n";
  }
  return out.str();
}

std::string render_curve_csv(const RobustnessCurve& curve) {
  std::ostringstream out;
  out << "threshold,inlier_proportion\n";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    out << curve.thresholds[i] << "," << std::setprecision(10)
        << curve.proportions[i] << "\n";
  return out.str();
}

std::string render_curve_svg(const RobustnessCurve& curve) {
  constexpr int w = 640, h = 420;
  constexpr int ml = 60, mr = 20, mt = 20, mb = 50;
  const double tmin = curve.thresholds.front();
  const double tmax = curve.thresholds.back();
  const auto px = [&](double t) {
    return ml + (t - tmin) / std::max(tmax - tmin, 1e-12) * (w - ml - mr);
  };
  const auto py = [&](double p) { return h - mb - p * (h - mt - mb); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  for (int p10 = 0; p10 <= 10; p10 += 2) {
    const double p = p10 / 10.0;
    out << "<text x=\"" << ml - 8 << "\" y=\"" << py(p) + 4
        << "\" font-size=\"12\" text-anchor=\"end\">" << std::fixed
        << std::setprecision(1) << p << "</text>\n";
    out << "<line x1=\"" << ml - 4 << "\" y1=\"" << py(p) << "\" x2=\"" << ml
        << "\" y2=\"" << py(p) << "\" stroke=\"black\"/>\n";
  }
  for (double t = 0; t <= tmax; t += 10) {
    if (t < tmin) continue;
    out << "<text x=\"" << px(t) << "\" y=\"" << h - mb + 18
        << "\" font-size=\"12\" text-anchor=\"middle\">" << std::fixed
        << std::setprecision(0) << t << "</text>\n";
    out << "<line x1=\"" << px(t) << "\" y1=\"" << h - mb << "\" x2=\""
        << px(t) << "\" y2=\"" << h - mb + 4 << "\" stroke=\"black\"/>\n";
  }
  out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
      << "\" font-size=\"13\" text-anchor=\"middle\">threshold (px)</text>\n";
  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    out << std::fixed << std::setprecision(2) << px(curve.thresholds[i]) << ","
        << py(curve.proportions[i]) << " ";
  out << "\"/>\n</svg>\n";
  return out.str();
}

}  // namespace homoscale
