#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ipl/data.hpp"
#include "ipl/encoder.hpp"

namespace ipl {

/// Everything an experiment run depends on. Flat `key = value` text files
/// set individual fields; unset keys keep these defaults.
struct ExperimentConfig {
    SyntheticSpec data;
    TrainConfig train;  // loss settings live in train.margin
    /// Verification is run once per gap; absent = no age-gap restriction.
    std::vector<std::optional<int>> eval_gaps = {20, 30};
    std::size_t eval_pair_count = 200;
    std::uint64_t eval_seed = 7;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string out_dir;  // empty: $INTERPROTO_OUT, then "runs"
    double reweight_child_weight = 2.0;
    double margin_up_child_margin = 0.7;
    double oversample_rho = 0.25;
};

ExperimentConfig default_config();

/// Parses `key = value` lines ('#' starts a comment). Unknown or repeated
/// keys are hard errors naming the line.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::filesystem::path& path);

/// Every key in sorted order with its resolved value; independent of the
/// order keys appeared in the source file.
std::string canonical_config_text(const ExperimentConfig& cfg);

/// FNV-1a 64 over the canonical text of experiment-identity keys (seeds and
/// output.dir excluded: they say where and how often to run, not what).
std::string config_digest(const ExperimentConfig& cfg);

/// Digest over data.* keys only; gates dataset reuse across config edits
/// that leave the data untouched.
std::string data_digest(const ExperimentConfig& cfg);

std::string resolve_out_dir(const ExperimentConfig& cfg);

enum class Arm { baseline, ip, ip_full, reweight, margin_up, oversample };
const char* arm_name(Arm a);
std::optional<Arm> arm_from_name(const std::string& name);
const std::vector<Arm>& all_arms();

/// Train settings for one arm and seed; fills run id and config digest.
TrainConfig arm_train_config(const ExperimentConfig& cfg, Arm arm, std::uint64_t seed);

}  // namespace ipl
