#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "plreg/config.hpp"

namespace plreg {

/// Everything one (config, seed) pipeline produced.
struct SeedOutcome {
  std::uint64_t seed = 0;
  std::vector<std::vector<std::string>> metrics_rows;
  std::vector<std::vector<std::string>> trace_rows;
  std::vector<MaskReport> masks;  // CIL only
  std::optional<ModelBundle> final_model;  // GCD and CIL
  // seed-level summary: GCD/mDG average over held-out domains, CIL average session accuracy
  Metrics metrics;
  double avg_acc = 0.0;
  std::string error;  // non-empty when training aborted
};

/// Runs the task pipeline of `config` for one seed. Never throws for training failures;
/// they are reported through SeedOutcome::error.
SeedOutcome run_seed(const ExperimentConfig& config, std::uint64_t seed);

/// Column headers of the output files for `task`.
std::vector<std::string> metrics_header(Task task);
std::vector<std::string> traces_header();
std::vector<std::string> masks_header();

/// Workers used for `jobs` independent jobs: PLREG_THREADS if set, else available cores.
std::size_t worker_count(std::size_t jobs);

/// git-describe style version of this build.
std::string version_string();

/// Writes metrics.csv, traces.csv, masks.csv (CIL) and manifest.txt to config.output_dir.
/// Returns 0 on success, 1 when any seed aborted (outputs of the other seeds are kept).
int run(const ExperimentConfig& config, std::ostream& log);

/// Runs `config` with `axis` set to every value and writes sweep.csv plus manifest.txt.
int sweep(const ExperimentConfig& config, const std::string& axis,
          const std::vector<double>& values, std::ostream& log);

/// Rewrites masks.csv of a CIL run directory as masks_heatmap.csv: one row per
/// (seed, session, view) with view in {normalized, binarized} and one column per dim.
int export_masks(const std::filesystem::path& run_dir, std::ostream& log);

}  // namespace plreg
