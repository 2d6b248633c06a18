#pragma once

#include <map>
#include <optional>
#include <vector>

#include "ipl/matrix.hpp"

namespace ipl {

enum class MarginKind { softmax, cosface, arcface };

const char* margin_kind_name(MarginKind k);
std::optional<MarginKind> margin_kind_from_name(const std::string& name);

/// Per-role loss weights for the re-weighting baseline: samples from child
/// age bins get `child`, the rest get `adult`.
struct RoleWeights {
    double child = 1.0;
    double adult = 1.0;
};

struct MarginConfig {
    MarginKind kind = MarginKind::arcface;
    double scale = 64.0;
    double margin = 0.5;
    double lambda_ip = 1.0;

    /// Raised-margin baseline: per-class margin replacing `margin` for the
    /// listed identities. Empty means no overrides.
    std::map<int, double> class_margin_override;

    /// Re-weighting baseline. Unset means every sample weighs 1.
    std::optional<RoleWeights> sample_weights;

    /// ArcFace here uses the plain cos(theta + m) with the cosine clamped to
    /// [-1+1e-7, 1-1e-7]. The easy-margin fallback (cos(theta) below zero)
    /// found in some codebases is off by default; this knob enables it.
    bool arcface_easy_margin = false;
};

struct LossResult {
    double loss = 0.0;
    Matrix grad_features;    // d x batch (empty for prototype-only losses)
    Matrix grad_prototypes;  // d x n
};

/// Softmax cross-entropy over scaled cosines with an additive (cosface) or
/// angular (arcface) margin on the true class. Gradients are with respect
/// to the raw feature and prototype columns, i.e. the column normalizations
/// are differentiated through.
LossResult margin_cross_entropy(const Matrix& features, const Matrix& prototypes,
                                const std::vector<int>& labels, const MarginConfig& cfg,
                                const std::vector<bool>& is_child = {});

/// Sum over ordered pairs (i != j) of squared cosine between the selected
/// prototype columns, i.e. ||C||_F^2 - n_child. Gradients land only on the
/// selected columns and pass through the column normalization.
LossResult inter_prototype_loss(const Matrix& prototypes, const std::vector<int>& child_ids);

struct LossBreakdown {
    double margin = 0.0;
    double ip = 0.0;  // unscaled, before the lambda_ip factor
};

/// margin_cross_entropy + lambda_ip * inter_prototype_loss. A zero
/// lambda_ip returns the margin result untouched.
LossResult total_loss(const Matrix& features, const Matrix& prototypes,
                      const std::vector<int>& labels, const std::vector<int>& child_ids,
                      const MarginConfig& cfg, const std::vector<bool>& is_child = {},
                      LossBreakdown* breakdown = nullptr);

/// Mean |cos| over off-diagonal pairs of the selected prototype columns.
double mean_offdiag_abs_cosine(const Matrix& prototypes, const std::vector<int>& ids);

}  // namespace ipl
