#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "ipl/config.hpp"

namespace ipl {

/// Writes through a temp name and renames, so readers never observe a
/// half-written file.
void write_text_atomic(const std::filesystem::path& path, const std::string& body);

/// Writes dataset.csv and dataset.meta.json under the output root.
void cmd_gen_data(const ExperimentConfig& cfg, std::ostream& log);

/// One run directory per seed: <out>/<arm>/seed_<n> with checkpoint.bin and
/// ledger.jsonl (streamed while training).
void cmd_train(const ExperimentConfig& cfg, Arm arm, const std::vector<std::uint64_t>& seeds,
               std::ostream& log);

/// Verification per configured gap, rank-1 identification, and the child
/// prototype summary; writes metrics.json and the pair files.
void cmd_eval(const ExperimentConfig& cfg, Arm arm, const std::vector<std::uint64_t>& seeds,
              std::ostream& log);

/// Similarity heatmaps (csv + pgm), the 2d prototype projection, and
/// summary.json under <run>/analysis.
void cmd_analyze(const ExperimentConfig& cfg, Arm arm, const std::vector<std::uint64_t>& seeds,
                 std::ostream& log);

/// Aggregates metrics.json across seeds per arm into mean and stdev,
/// prints an aligned table and writes comparison.json + comparison.txt.
/// Mixing metrics produced under different config digests is an error.
void cmd_compare(const ExperimentConfig& cfg, const std::vector<Arm>& arms, std::ostream& log);

int run_cli(int argc, char** argv);

}  // namespace ipl
