#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "csm/run_store.hpp"

namespace csm::pipeline {

struct Options {
    std::filesystem::path runs_root = "runs";
    // Empty: CSM_CACHE_DIR, falling back to "cache". The cache always lives
    // outside the run directory so run directories stay byte-reproducible.
    std::filesystem::path cache_dir;
    std::ostream* log = nullptr;  // nullptr == std::cout
};

std::filesystem::path resolve_cache_dir(const Options& options);

// Creates runs/<run_id>/ with the config snapshot, ingested corpus, prompt
// copies and an all-pending manifest.
void cmd_init(const std::string& config_path, const Options& options,
              bool force = false);

enum class RunOutcome { completed, up_to_date, halted_for_review };

// Runs one named stage, or `all` (which pauses at the review gate until
// review/merge_overrides.json exists).
RunOutcome cmd_run(const std::string& run_id, const std::string& stage,
                   const Options& options);

// Replaces the summarize stage with pre-existing summaries bucketed
// to the nearest budget, tagged as replicate 0 of the "ingested" pseudo-backend.
void cmd_ingest_summaries(const std::string& run_id, const std::string& file,
                          double tolerance, const Options& options);

// Re-runs summarize + entail at each temperature against the base run's
// claims; writes sweep/sweep.csv (temperature, mean_tlr, length_mad, ic).
void cmd_sweep_temperature(const std::string& run_id,
                           const std::vector<double>& temperatures,
                           const Options& options);

}  // namespace csm::pipeline
