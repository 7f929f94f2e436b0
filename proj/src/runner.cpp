#include "homoscale/runner.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "homoscale/evaluation.hpp"
#include "homoscale/image_io.hpp"
#include "homoscale/io.hpp"
#include "homoscale/manifest.hpp"
#include "homoscale/rng.hpp"
#include "homoscale/warp.hpp"

namespace homoscale {

namespace {

using nlohmann::json;

std::string zero_pad(int v, int width = 4) {
  std::ostringstream out;
  out << std::setw(width) << std::setfill('0') << v;
  return out.str();
}

/// Index-ordered results, parallel compute, sequential writes afterwards.
template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::min(std::max(threads, 1), std::max(count, 1));
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

json error_record(const Error& e) {
  return json{{"code", e.code()}, {"message", e.what()}};
}

// ---------------------------------------------------------------- gen ----

int run_gen(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  ChainConfig chain_cfg = cfg.chain;
  chain_cfg.seed = cfg.seed;
  chain_cfg.validate();

  struct GenResult {
    ProgressiveChain chain;
    std::uint64_t texture_seed = 0;
  };
  std::vector<GenResult> results(static_cast<std::size_t>(cfg.count));
  const int margin = 80;
  parallel_for(cfg.count, resolve_threads(cfg.threads), [&](int i) {
    const std::uint64_t tex_seed = mix64(cfg.seed ^ mix64(1000 + i));
    const Image texture = make_texture(chain_cfg.crop_w + margin,
                                       chain_cfg.crop_h + margin, tex_seed);
    results[i].texture_seed = tex_seed;
    results[i].chain = build_chain(texture, nullptr, chain_cfg,
                                   static_cast<std::uint64_t>(i));
  });

  std::vector<DatasetRecord> records;
  for (int i = 0; i < cfg.count; ++i) {
    const auto& chain = results[i].chain;
    const std::string dir_name = "chain_" + zero_pad(i);
    const std::filesystem::path dir = cfg.out / dir_name;
    std::filesystem::create_directories(dir);

    json meta;
    meta["index"] = i;
    meta["seed"] = cfg.seed;
    meta["texture_seed"] = results[i].texture_seed;
    meta["crop"] = {chain_cfg.crop_w, chain_cfg.crop_h};
    meta["resize"] = {chain_cfg.resize_w, chain_cfg.resize_h};
    json images = json::array();
    json masks = json::array();
    for (std::size_t k = 0; k < chain.images.size(); ++k) {
      const bool is_target = k + 1 == chain.images.size();
      const std::string name =
          is_target ? "t.png" : "s" + std::to_string(k) + ".png";
      write_png(dir / name, chain.images[k]);
      images.push_back(dir_name + "/" + name);
      if (k == 0) {
        masks.push_back(nullptr);  // the source crop is fully valid
      } else {
        const std::string mask_name = "mask_" + name;
        write_mask_png(dir / mask_name, chain.masks[k]);
        masks.push_back(dir_name + "/" + mask_name);
      }
    }
    meta["images"] = images;
    meta["masks"] = masks;
    json hops = json::array();
    for (const auto& h : chain.gt_hops) hops.push_back(homography_to_json(h));
    meta["gt_hops"] = hops;
    if (chain.h_st) meta["h_st"] = homography_to_json(*chain.h_st);
    write_file_atomic(dir / "chain.json", meta.dump(2) + "\n");

    DatasetRecord rec;
    rec.source = images.front().get<std::string>();
    rec.target = images.back().get<std::string>();
    rec.category = "synthetic";
    if (chain.h_st)
      rec.points = grid_correspondences(*chain.h_st, chain_cfg.crop_w,
                                        chain_cfg.crop_h);
    if (!masks.back().is_null())
      rec.target_mask = masks.back().get<std::string>();
    records.push_back(std::move(rec));
  }
  write_manifest(cfg.out / "manifest.json", records);
  return 0;
}

// ----------------------------------------------------------- estimate ----

struct PairOutcome {
  bool ok = false;
  Homography h;
  EstimateDiagnostics diagnostics;
  std::vector<double> level_pme;   // when the record is labeled
  double pme_value = -1.0;
  json error;
};

int run_estimate(const RunConfig& cfg) {
  const ManifestParseResult manifest = parse_manifest(cfg.input);
  for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << "\n";
  std::filesystem::create_directories(cfg.out);
  const std::filesystem::path base = cfg.input.parent_path();

  const int count = static_cast<int>(manifest.records.size());
  std::vector<PairOutcome> outcomes(static_cast<std::size_t>(count));
  parallel_for(count, resolve_threads(cfg.threads), [&](int i) {
    const DatasetRecord& rec = manifest.records[static_cast<std::size_t>(i)];
    PairOutcome& out = outcomes[static_cast<std::size_t>(i)];
    try {
      const Image src = load_image(base / rec.source);
      const Image tgt = load_image(base / rec.target);
      std::optional<ValidityMask> src_mask, tgt_mask;
      if (rec.source_mask) src_mask = load_mask_png(base / *rec.source_mask);
      if (rec.target_mask) tgt_mask = load_mask_png(base / *rec.target_mask);
      EstimateResult est =
          estimate(src, tgt, cfg.estimator, src_mask ? &*src_mask : nullptr,
                   tgt_mask ? &*tgt_mask : nullptr);
      out.h = est.h;
      out.diagnostics = std::move(est.diagnostics);
      if (!rec.points.empty()) {
        out.pme_value = pme(out.h, rec.points).pme;
        for (const auto& lv : out.diagnostics.levels)
          out.level_pme.push_back(pme(lv.estimate, rec.points).pme);
      }
      out.ok = true;
    } catch (const Error& e) {
      out.error = error_record(e);
    }
  });

  json errors = json::array();
  std::ostringstream summary;
  summary << "id,category,pme,matches\n";
  for (int i = 0; i < count; ++i) {
    const auto& rec = manifest.records[static_cast<std::size_t>(i)];
    const auto& out = outcomes[static_cast<std::size_t>(i)];
    const std::string stem = "pair_" + zero_pad(i);
    if (!out.ok) {
      json err = out.error;
      err["id"] = stem;
      errors.push_back(err);
      write_file_atomic(cfg.out / (stem + ".error.json"), err.dump(2) + "\n");
      summary << stem << "," << rec.category << ",,0\n";
      continue;
    }
    json hj = homography_to_json(out.h);
    hj["id"] = stem;
    hj["category"] = rec.category;
    write_file_atomic(cfg.out / (stem + ".homography.json"), hj.dump(2) + "\n");

    json diag;
    diag["match_count"] =
        static_cast<int>(out.diagnostics.matches.size());
    json levels = json::array();
    for (std::size_t k = 0; k < out.diagnostics.levels.size(); ++k) {
      const auto& lv = out.diagnostics.levels[k];
      json lj;
      lj["level"] = lv.level;
      lj["cell"] = lv.cell;
      lj["matches_raw"] = lv.matches_raw;
      lj["matches_used"] = lv.matches_used;
      lj["irls_inlier_ratio"] = lv.irls_inlier_ratio;
      lj["skipped"] = lv.skipped;
      if (k < out.level_pme.size()) lj["pme"] = out.level_pme[k];
      levels.push_back(lj);
    }
    diag["levels"] = levels;
    write_file_atomic(cfg.out / (stem + ".diagnostics.json"),
                      diag.dump(2) + "\n");

    summary << stem << "," << rec.category << ",";
    if (out.pme_value >= 0)
      summary << std::setprecision(10) << out.pme_value;
    summary << "," << out.diagnostics.matches.size() << "\n";
  }
  write_file_atomic(cfg.out / "summary.csv", summary.str());
  if (!errors.empty()) {
    write_file_atomic(cfg.out / "errors.json", errors.dump(2) + "\n");
    return 1;
  }
  return 0;
}

// -------------------------------------------------------------- train ----

ProgressiveChain load_chain(const std::filesystem::path& chain_json) {
  std::ifstream in(chain_json);
  if (!in) throw MissingFile("cannot open " + chain_json.string());
  json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("chain " + chain_json.string() + ": " + e.what());
  }
  // Image paths are relative to the directory holding the chain directory.
  const std::filesystem::path base = chain_json.parent_path().parent_path();
  ProgressiveChain chain;
  for (std::size_t k = 0; k < meta.at("images").size(); ++k) {
    chain.images.push_back(load_image(base / meta["images"][k].get<std::string>()));
    if (meta.at("masks")[k].is_null())
      chain.masks.emplace_back(chain.images.back().width,
                               chain.images.back().height, true);
    else
      chain.masks.push_back(load_mask_png(base / meta["masks"][k].get<std::string>()));
  }
  for (const auto& hj : meta.at("gt_hops"))
    chain.gt_hops.push_back(homography_from_json(hj));
  if (meta.contains("h_st")) chain.h_st = homography_from_json(meta["h_st"]);
  return chain;
}

int run_train(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  const ProgressiveChain chain = load_chain(cfg.input);
  const int n = chain.n();
  if (n < 1)
    throw ValidationError("train needs a chain with intermediate images");

  // Initialize every pair from the correlation estimator.
  std::vector<Homography> hop_init, bridge_init;
  for (int i = 0; i < n; ++i)
    hop_init.push_back(estimate(chain.images[i], chain.images[i + 1],
                                cfg.estimator, &chain.masks[i],
                                &chain.masks[i + 1])
                           .h);
  for (int i = 0; i < n; ++i)
    bridge_init.push_back(estimate(chain.images[i + 1], chain.images.back(),
                                   cfg.estimator, &chain.masks[i + 1],
                                   &chain.masks.back())
                              .h);
  EstimateResult direct_est =
      estimate(chain.source(), chain.target(), cfg.estimator,
               &chain.masks.front(), &chain.masks.back());

  const auto corners =
      frame_corners(chain.source().width, chain.source().height);
  const PairwiseParams init = params_from_homographies(
      hop_init, bridge_init, direct_est.h, corners);

  const OptimizeResult result =
      direct_optimize(chain, init, cfg.optimizer, cfg.loss,
                      &direct_est.diagnostics.matches);

  if (cfg.log_steps) {
    std::ostringstream trace;
    for (std::size_t k = 0; k < result.trace.size(); ++k) {
      const LossReport& r = result.trace[k];
      json line;
      line["iteration"] = k;
      line["l_sup"] = r.l_sup;
      line["l_unsup"] = r.l_unsup;
      line["lambda_w"] = r.lambda_w;
      line["l_hil"] = r.l_hil;
      line["anchor"] = r.anchor;
      trace << line.dump() << "\n";
    }
    write_file_atomic(cfg.out / "trace.jsonl", trace.str());
  }

  json out;
  json hops = json::array(), bridges = json::array();
  Homography composed = Homography::identity();
  for (const auto& h : result.hops) {
    hops.push_back(homography_to_json(h));
    composed = compose(h, composed);
  }
  composed = compose(result.bridges.back(), composed);
  for (const auto& h : result.bridges) bridges.push_back(homography_to_json(h));
  out["hops"] = hops;
  out["bridges"] = bridges;
  out["h_st_direct"] = homography_to_json(result.direct);
  out["h_st_composed"] = homography_to_json(composed);
  out["consistency_residual"] = result.consistency;
  out["iterations"] = result.iterations_run;
  write_file_atomic(cfg.out / "result.json", out.dump(2) + "\n");
  return 0;
}

// --------------------------------------------------------------- eval ----

int run_eval(const RunConfig& cfg) {
  const ManifestParseResult manifest = parse_manifest(cfg.input);
  std::filesystem::create_directories(cfg.out);

  std::vector<EvalRecord> method_records;
  CategoryRow baseline;
  baseline.name = "identity";
  std::map<std::string, std::pair<double, int>> baseline_sums;
  std::vector<double> pooled_errors;

  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& rec = manifest.records[i];
    if (rec.points.empty()) continue;
    const std::string stem = "pair_" + zero_pad(static_cast<int>(i));
    const std::filesystem::path hpath = cfg.estimates / (stem + ".homography.json");
    if (!std::filesystem::exists(hpath))
      throw MissingFile("no estimate for " + stem + " under " +
                        cfg.estimates.string());
    std::ifstream in(hpath);
    json hj;
    in >> hj;
    const Homography h = homography_from_json(hj);

    EvalRecord er = pme(h, rec.points, stem, rec.category);
    pooled_errors.insert(pooled_errors.end(), er.per_point_errors.begin(),
                         er.per_point_errors.end());
    method_records.push_back(std::move(er));

    const EvalRecord ir = pme(Homography::identity(), rec.points);
    auto& s = baseline_sums[rec.category];
    s.first += ir.pme;
    s.second += 1;
  }
  if (method_records.empty())
    throw EmptyInput("no labeled records to evaluate");

  double avg_acc = 0.0;
  for (const auto& [cat, s] : baseline_sums) {
    baseline.means[cat] = s.first / s.second;
    avg_acc += baseline.means[cat];
  }
  baseline.avg = avg_acc / static_cast<double>(baseline_sums.size());

  const CategoryTable table =
      category_report(method_records, "estimate", baseline);
  write_file_atomic(cfg.out / "report.txt", render_table_text(table));
  write_file_atomic(cfg.out / "report.csv", render_table_csv(table));

  const RobustnessCurve curve =
      inlier_curve(pooled_errors, default_thresholds());
  write_file_atomic(cfg.out / "robustness.csv", render_curve_csv(curve));
  write_file_atomic(cfg.out / "robustness.svg", render_curve_svg(curve));
  return 0;
}

// --------------------------------------------------------------- plot ----

int run_plot(const RunConfig& cfg) {
  std::ifstream in(cfg.input);
  if (!in) throw MissingFile("cannot open " + cfg.input.string());
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("empty robustness csv " + cfg.input.string());
  RobustnessCurve curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError("bad csv line: " + line);
    curve.thresholds.push_back(std::stod(line.substr(0, comma)));
    curve.proportions.push_back(std::stod(line.substr(comma + 1)));
  }
  if (curve.thresholds.empty())
    throw ParseError("no data rows in " + cfg.input.string());

  std::filesystem::path out = cfg.out;
  if (out.empty()) out = cfg.input.parent_path() / "robustness.svg";
  if (!out.parent_path().empty())
    std::filesystem::create_directories(out.parent_path());
  write_file_atomic(out, render_curve_svg(curve));
  return 0;
}

}  // namespace

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("HOMOSCALE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

int run(const RunConfig& cfg) {
  try {
    if (cfg.command == "gen") return run_gen(cfg);
    if (cfg.command == "estimate") return run_estimate(cfg);
    if (cfg.command == "train") return run_train(cfg);
    if (cfg.command == "eval") return run_eval(cfg);
    if (cfg.command == "plot") return run_plot(cfg);
    throw ValidationError("unknown command \"" + cfg.command + "\"");
  } catch (const Error& e) {
    const json err = error_record(e);
    std::cerr << err.dump() << "\n";
    return 1;
  }
}

}  // namespace homoscale
