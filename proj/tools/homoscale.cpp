#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "homoscale/runner.hpp"

namespace {

bool parse_dims(const std::string& s, int& w, int& h) {
  const auto x = s.find('x');
  if (x == std::string::npos) return false;
  try {
    w = std::stoi(s.substr(0, x));
    h = std::stoi(s.substr(x + 1));
  } catch (...) {
    return false;
  }
  return w >= 2 && h >= 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"homoscale: progressive large-baseline homography toolkit"};
  app.require_subcommand(1);

  homoscale::RunConfig cfg;
  std::string resize, crop, lambda_w = "auto", unsup_form = "matrix";

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "base RNG seed");
    sub->add_option("--threads", cfg.threads,
                    "worker cap (also HOMOSCALE_THREADS)");
  };
  const auto add_estimator = [&](CLI::App* sub) {
    sub->add_option("--resize", resize, "working resolution WxH (default 256x256)");
    sub->add_option("--radius", cfg.estimator.radius, "local correlation radius");
    sub->add_option("--ratio", cfg.estimator.ratio,
                    "global ratio-test threshold in (0,1]");
    sub->add_option("--local-ratio", cfg.estimator.local_ratio,
                    "finer-level ratio-test threshold");
  };
  const auto add_loss = [&](CLI::App* sub) {
    sub->add_option("--lambda-w", lambda_w, "auto or a fixed weight value");
    sub->add_option("--eps", cfg.loss.epsilon, "Charbonnier smoothing");
    sub->add_option("--unsup-form", unsup_form, "matrix or flow");
  };

  auto* gen = app.add_subcommand("gen", "generate synthetic progressive chains");
  gen->add_option("--out", cfg.out, "output directory")->required();
  gen->add_option("--count", cfg.count, "number of chains");
  gen->add_option("--n", cfg.chain.n, "inserted intermediate images");
  gen->add_option("--crop", crop, "crop size WxH (default 320x480)");
  gen->add_option("--max-overlap-rate", cfg.chain.max_intermediate_rate,
                  "intermediate non-overlap ceiling");
  gen->add_option("--min-pert", cfg.chain.min_perturbation,
                  "minimum corner perturbation (px)");
  gen->add_option("--max-pert", cfg.chain.max_perturbation,
                  "maximum corner perturbation (px)");
  add_common(gen);

  auto* est = app.add_subcommand("estimate", "estimate homographies for a manifest");
  est->add_option("--manifest", cfg.input, "dataset manifest")->required();
  est->add_option("--out", cfg.out, "output directory")->required();
  add_estimator(est);
  add_common(est);

  auto* train = app.add_subcommand("train", "direct HIL optimization on a chain");
  train->add_option("--chain", cfg.input, "chain.json from gen")->required();
  train->add_option("--out", cfg.out, "output directory")->required();
  train->add_option("--mu", cfg.optimizer.mu, "anchor weight");
  train->add_option("--iters", cfg.optimizer.iterations, "iteration budget");
  train->add_option("--step", cfg.optimizer.step, "initial step size");
  train->add_option("--stride", cfg.optimizer.stride, "loss-grid stride");
  train->add_flag("!--no-trace", cfg.log_steps, "disable the loss trace");
  add_estimator(train);
  add_loss(train);
  add_common(train);

  auto* eval = app.add_subcommand("eval", "score estimates against labels");
  eval->add_option("--manifest", cfg.input, "dataset manifest")->required();
  eval->add_option("--estimates", cfg.estimates,
                   "directory produced by estimate")->required();
  eval->add_option("--out", cfg.out, "output directory")->required();
  add_common(eval);

  auto* plot = app.add_subcommand("plot", "render a robustness curve SVG");
  plot->add_option("--csv", cfg.input, "robustness.csv")->required();
  plot->add_option("--out", cfg.out, "output SVG path");

  CLI11_PARSE(app, argc, argv);

  if (!resize.empty()) {
    int w, h;
    if (!parse_dims(resize, w, h)) {
      std::cerr << "{\"code\":\"validation-error\",\"message\":\"bad --resize\"}\n";
      return 2;
    }
    cfg.estimator.resize_w = w;
    cfg.estimator.resize_h = h;
    cfg.optimizer.resize_w = w;
    cfg.optimizer.resize_h = h;
    cfg.chain.resize_w = w;
    cfg.chain.resize_h = h;
  }
  if (!crop.empty()) {
    int w, h;
    if (!parse_dims(crop, w, h)) {
      std::cerr << "{\"code\":\"validation-error\",\"message\":\"bad --crop\"}\n";
      return 2;
    }
    cfg.chain.crop_w = w;
    cfg.chain.crop_h = h;
  }
  if (lambda_w == "auto") {
    cfg.loss.lambda_w_auto = true;
  } else {
    try {
      cfg.loss.lambda_w_fixed = std::stod(lambda_w);
      cfg.loss.lambda_w_auto = false;
    } catch (...) {
      std::cerr << "{\"code\":\"validation-error\",\"message\":\"bad --lambda-w\"}\n";
      return 2;
    }
  }
  if (unsup_form == "flow") cfg.loss.unsup_form = homoscale::UnsupForm::flow;

  for (auto* sub : {gen, est, train, eval, plot})
    if (sub->parsed()) cfg.command = sub->get_name();

  return homoscale::run(cfg);
}
