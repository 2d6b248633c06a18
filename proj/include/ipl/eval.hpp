#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ipl/data.hpp"
#include "ipl/encoder.hpp"
#include "ipl/matrix.hpp"

namespace ipl {

/// Embeddings for every sample, one column per sample in dataset order.
Matrix embed_dataset(const EncoderParams& params, const Dataset& ds);

enum class RoleFilter { child, adult, all };
const char* role_filter_name(RoleFilter f);

/// Mean cosine between an identity's samples (under the filter) and its own
/// prototype. Identities with no qualifying samples are reported separately.
struct IntraClassResult {
    std::vector<int> identities;  // ascending, only those with >= 1 qualifying sample
    Vector values;                // per reported identity
    std::vector<int> excluded;    // identities with no qualifying sample
};
IntraClassResult intra_class_similarity(const Matrix& embeddings, const Matrix& prototypes,
                                        const std::vector<int>& identity_labels,
                                        const std::vector<int>& age_groups, RoleFilter filter);

/// Mean pairwise cosine between samples of identity i and identity j
/// (i != j), both restricted by the filter. Symmetric, zero diagonal.
struct InterClassResult {
    std::vector<int> identities;
    Matrix matrix;
};
InterClassResult inter_class_similarity(const Matrix& embeddings,
                                        const std::vector<int>& identity_labels,
                                        const std::vector<int>& age_groups, RoleFilter filter);

/// Cross-role variant: entry (i, j) is the mean cosine between identity i's
/// role_rows samples and identity j's role_cols samples. The diagonal is
/// meaningful here (same identity across roles). Only identities with at
/// least one sample in each role are included.
struct CrossRoleResult {
    std::vector<int> identities;
    Matrix matrix;
};
CrossRoleResult cross_role_similarity(const Matrix& embeddings,
                                      const std::vector<int>& identity_labels,
                                      const std::vector<int>& age_groups, RoleFilter role_rows,
                                      RoleFilter role_cols);

/// Prototype-space cosine structure over a subset of identities.
struct PrototypeSimilarityResult {
    std::vector<int> identities;
    Matrix matrix;             // cosine matrix over the subset
    double mean_offdiag_abs;   // 0 when the subset has a single identity
};
PrototypeSimilarityResult prototype_similarity(const PrototypeHead& head,
                                               const std::vector<int>& subset);

struct VerificationPair {
    int identity_a = 0;  // child-side member
    std::size_t sample_a = 0;
    int identity_b = 0;  // adult-side member
    std::size_t sample_b = 0;
    bool same = false;
    int age_a = 0;
    int age_b = 0;
};

struct PairSet {
    std::vector<VerificationPair> pairs;
    /// Strict gap rule: adult age minus child age must exceed this.
    std::optional<int> min_age_gap;
};

/// Builds `count` positive and `count` negative child-adult pairs, all
/// satisfying the strict age-gap rule, without duplicates. Errors when the
/// dataset cannot supply enough qualifying pairs (the message says how many
/// exist).
PairSet build_verification_pairs(const Dataset& ds, std::optional<int> min_gap_years,
                                 std::size_t count, std::uint64_t seed);

/// CSV with a `# gap_rule:` comment line, then
/// `identity_a,sample_a,identity_b,sample_b,label,age_a,age_b`.
std::string pair_set_to_csv(const PairSet& pairs);

/// One adult gallery image per identity that can satisfy the gap rule
/// against every probe, plus one child probe per identity that made it into
/// the gallery. Non-child identities act as gallery distractors.
struct IdentificationSplit {
    std::vector<int> gallery_identities;  // unique, ascending
    std::vector<std::size_t> gallery_samples;
    std::vector<int> probe_identities;
    std::vector<std::size_t> probe_samples;
};
IdentificationSplit build_identification_split(const Dataset& ds,
                                               std::optional<int> min_gap_years,
                                               std::uint64_t seed);

struct VerificationReport {
    double accuracy = 0.0;
    double threshold = 0.0;
    std::vector<double> scores;  // cosine per pair, pair order
};

/// Sweeps thresholds over score midpoints (predict same when score >= t)
/// and reports the best accuracy with the threshold that achieves it.
VerificationReport verification_accuracy(const Matrix& embeddings, const PairSet& pairs);

struct Rank1Report {
    double accuracy = 0.0;
    std::size_t n_probes = 0;
    std::size_t n_gallery = 0;
};

/// Rank-1: each probe picks the gallery column with the highest cosine
/// (ties go to the lowest gallery index).
Rank1Report rank1_identification(const Matrix& embeddings, const IdentificationSplit& split);

enum class HeatmapFormat { csv, pgm };

/// csv: plain numeric rows. pgm: P2 grayscale, values must lie in [-1, 1];
/// -1 maps to 0, 0 to 128, 1 to 255 (round half up).
std::string export_heatmap(const Matrix& m, HeatmapFormat fmt);

/// Unit-normalizes prototype columns and projects them to the top-2
/// principal axes. All-equal prototypes land at the origin with the
/// rank-deficiency flag set.
struct ProjectedPrototypes {
    std::vector<int> identities;
    std::vector<bool> is_child;
    Matrix coords;  // n x 2
    bool rank_deficient = false;
};
ProjectedPrototypes project_prototypes_2d(const PrototypeHead& head);

/// CSV `identity,is_child,x,y`.
std::string projection_to_csv(const ProjectedPrototypes& proj);

}  // namespace ipl
