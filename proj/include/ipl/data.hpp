#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ipl/matrix.hpp"

namespace ipl {

/// Age bins: 0-12, 13-18, 19-25, 26-35, 36-45, 46-55, 56-65, >=66.
/// Bin 0 is the child bin.
constexpr int kAgeGroups = 8;
int age_group_of(int age_years);
bool is_child_group(int age_group);

struct Sample {
    int identity = 0;
    int age_group = 0;
    int age_years = 0;
    Vector features;
};

struct Dataset {
    std::vector<Sample> samples;
    std::size_t n_identities = 0;
    std::size_t feature_dim = 0;
};

/// Identities having at least one sample in the child bin, ascending.
std::vector<int> child_class_index(const Dataset& ds);

struct SyntheticSpec {
    std::size_t n_identities = 40;
    double child_fraction = 0.3;  // fraction of identities that include child samples
    std::size_t adult_samples_per_identity = 12;
    std::size_t child_samples_per_identity = 3;
    std::size_t feature_dim = 32;
    /// 0 = every child sample sits on one shared mode, 1 = child samples are
    /// fully identity-specific. Low values reproduce the high inter-class
    /// similarity observed among children.
    double child_collapse = 0.35;
    double noise_sigma = 0.05;
    std::uint64_t seed = 1;
};

/// Each identity gets a latent unit vector u_i. Adult samples are u_i plus
/// noise; child samples of child-flagged identities mix u_i with a single
/// shared child mode g: normalize(kappa*u_i + (1-kappa)*g) plus noise.
/// Pure function of the spec: the same spec yields identical bytes.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// CSV schema, exactly: header `identity,age_group,age_years,f0..f{d-1}`,
/// UTF-8, '.' decimal, LF line endings.
std::string to_csv(const Dataset& ds);
Dataset load_csv_text(const std::string& text);
Dataset load_csv_file(const std::filesystem::path& path);
void write_csv_file(const Dataset& ds, const std::filesystem::path& path);

/// Per-epoch batch index generator. Without rho every sample is visited
/// exactly once per epoch (trailing incomplete batch dropped). With rho the
/// expected child:adult count ratio per batch equals rho, children drawn
/// with replacement.
class BatchSampler {
  public:
    BatchSampler(const Dataset& ds, std::size_t batch_size, std::optional<double> rho,
                 std::uint64_t seed);

    std::vector<std::vector<std::size_t>> next_epoch();
    std::size_t batches_per_epoch() const { return batches_per_epoch_; }

  private:
    std::size_t batch_size_;
    std::optional<double> rho_;
    std::size_t batches_per_epoch_;
    std::vector<std::size_t> all_;
    std::vector<std::size_t> child_pool_;
    std::vector<std::size_t> adult_pool_;
    std::vector<std::size_t> adult_stream_;
    std::size_t adult_pos_ = 0;
    Rng rng_;
};

}  // namespace ipl
