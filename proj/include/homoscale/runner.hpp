#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "homoscale/estimator.hpp"
#include "homoscale/synthesis.hpp"

namespace homoscale {

/// Resolved configuration of one CLI invocation. Precedence: CLI flags over
/// defaults; referenced paths must exist for read commands.
struct RunConfig {
  std::string command;              // gen | estimate | train | eval | plot
  std::filesystem::path input;      // manifest / chain.json / csv
  std::filesystem::path estimates;  // eval: directory of homography JSONs
  std::filesystem::path out;        // output directory (file for plot)
  int count = 8;                    // gen: chains to generate
  ChainConfig chain;
  EstimatorConfig estimator;
  OptimizerConfig optimizer;
  LossConfig loss;
  std::uint64_t seed = 0x5ca1ab1e;
  int threads = 0;                  // 0: HOMOSCALE_THREADS or hardware
  bool log_steps = true;            // train: write the per-step loss trace
};

/// Executes one subcommand; returns the process exit status (0 on success).
/// Failures write a machine-readable error record and return nonzero.
int run(const RunConfig& cfg);

/// Worker cap from the environment (HOMOSCALE_THREADS) or hardware.
int resolve_threads(int requested);

}  // namespace homoscale
