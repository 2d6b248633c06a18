#include "ipl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ipl {

namespace {

constexpr double kHalfPi = 1.5707963267948966;
constexpr double kCosClamp = 1e-7;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// Sorted, duplicate-checked copy; canonical order keeps the loss value
// invariant under permutations of the input.
std::vector<int> canonical_ids(const std::vector<int>& ids, std::size_t n_cols,
                               const char* who) {
    std::vector<int> out = ids;
    std::sort(out.begin(), out.end());
    if (std::adjacent_find(out.begin(), out.end()) != out.end())
        fail(std::string(who) + ": duplicate identity index");
    if (!out.empty() && (out.front() < 0 || static_cast<std::size_t>(out.back()) >= n_cols))
        fail(std::string(who) + ": identity index out of range");
    return out;
}

struct MarginFn {
    double psi;    // penalized cosine fed to the logit
    double dpsi;   // d psi / d cos
};

MarginFn apply_margin(MarginKind kind, double c, double m, bool easy) {
    switch (kind) {
        case MarginKind::softmax:
            return {c, 1.0};
        case MarginKind::cosface:
            return {c - m, 1.0};
        case MarginKind::arcface: {
            if (easy && c <= 0.0) return {c, 1.0};
            const double cc = std::clamp(c, -1.0 + kCosClamp, 1.0 - kCosClamp);
            const double theta = std::acos(cc);
            const double psi = std::cos(theta + m);
            // outside the clamp the dependence on c is cut off
            if (c <= -1.0 + kCosClamp || c >= 1.0 - kCosClamp) return {psi, 0.0};
            return {psi, std::sin(theta + m) / std::sin(theta)};
        }
    }
    fail("apply_margin: unknown kind");
}

}  // namespace

const char* margin_kind_name(MarginKind k) {
    switch (k) {
        case MarginKind::softmax: return "softmax";
        case MarginKind::cosface: return "cosface";
        case MarginKind::arcface: return "arcface";
    }
    return "?";
}

std::optional<MarginKind> margin_kind_from_name(const std::string& name) {
    if (name == "softmax") return MarginKind::softmax;
    if (name == "cosface") return MarginKind::cosface;
    if (name == "arcface") return MarginKind::arcface;
    return std::nullopt;
}

LossResult margin_cross_entropy(const Matrix& features, const Matrix& prototypes,
                                const std::vector<int>& labels, const MarginConfig& cfg,
                                const std::vector<bool>& is_child) {
    const std::size_t d = features.rows;
    const std::size_t batch = features.cols;
    const std::size_t n = prototypes.cols;

    if (batch == 0) fail("margin_cross_entropy: empty batch");
    if (prototypes.rows != d) fail("margin_cross_entropy: feature/prototype dimensions disagree");
    if (labels.size() != batch) fail("margin_cross_entropy: one label per sample required");
    if (cfg.scale <= 0.0) fail("margin_cross_entropy: scale must be positive");
    if (cfg.margin < 0.0) fail("margin_cross_entropy: margin must be nonnegative");
    require_finite(features, "margin_cross_entropy: features");
    require_finite(prototypes, "margin_cross_entropy: prototypes");

    auto margin_for = [&](int label) {
        auto it = cfg.class_margin_override.find(label);
        return it == cfg.class_margin_override.end() ? cfg.margin : it->second;
    };
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n)
            fail("margin_cross_entropy: label " + std::to_string(y) + " out of range");
        if (cfg.kind == MarginKind::arcface && margin_for(y) >= kHalfPi)
            fail("margin_cross_entropy: arcface margin must stay below pi/2");
    }
    if (cfg.sample_weights && is_child.size() != batch)
        fail("margin_cross_entropy: sample weights need a child flag per sample");
    if (cfg.sample_weights &&
        (cfg.sample_weights->child <= 0.0 || cfg.sample_weights->adult <= 0.0))
        fail("margin_cross_entropy: sample weights must be positive");

    Vector feat_norm(batch), proto_norm(n);
    for (std::size_t i = 0; i < batch; ++i) {
        feat_norm[i] = col_norm(features, i);
        if (!(feat_norm[i] > 1e-300))
            fail("margin_cross_entropy: zero-norm feature column " + std::to_string(i));
    }
    for (std::size_t j = 0; j < n; ++j) {
        proto_norm[j] = col_norm(prototypes, j);
        if (!(proto_norm[j] > 1e-300))
            fail("margin_cross_entropy: zero-norm prototype column " + std::to_string(j));
    }

    Matrix feat_hat(d, batch), proto_hat(d, n);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t i = 0; i < batch; ++i) feat_hat(r, i) = features(r, i) / feat_norm[i];
        for (std::size_t j = 0; j < n; ++j) proto_hat(r, j) = prototypes(r, j) / proto_norm[j];
    }

    // cosines[j][i] layout: one row per class
    const Matrix cosines = matmul_at_b(proto_hat, feat_hat);

    LossResult out;
    out.grad_features = Matrix(d, batch);
    out.grad_prototypes = Matrix(d, n);

    const double inv_batch = 1.0 / static_cast<double>(batch);
    double loss = 0.0;

    // grad wrt normalized prototype columns, accumulated over samples
    Matrix proto_hat_grad(d, n);

    Vector logits(n);
    for (std::size_t i = 0; i < batch; ++i) {
        const int y = labels[i];
        const double weight =
            cfg.sample_weights
                ? (is_child[i] ? cfg.sample_weights->child : cfg.sample_weights->adult)
                : 1.0;
        const MarginFn mf = apply_margin(cfg.kind, cosines(static_cast<std::size_t>(y), i),
                                         margin_for(y), cfg.arcface_easy_margin);
        for (std::size_t j = 0; j < n; ++j) logits[j] = cfg.scale * cosines(j, i);
        logits[static_cast<std::size_t>(y)] = cfg.scale * mf.psi;

        const double lse = log_sum_exp(logits);
        loss += weight * (lse - logits[static_cast<std::size_t>(y)]);

        // dl/dcos_j = s * (p_j - [j==y]) * (j==y ? dpsi : 1)
        const double coef = weight * inv_batch * cfg.scale;
        Vector grad_feat_hat(d, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double p = std::exp(logits[j] - lse);
            double g = coef * (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0));
            if (static_cast<std::size_t>(y) == j) g *= mf.dpsi;
            if (g == 0.0) continue;
            for (std::size_t r = 0; r < d; ++r) {
                grad_feat_hat[r] += g * proto_hat(r, j);
                proto_hat_grad(r, j) += g * feat_hat(r, i);
            }
        }

        // through x_hat = x/|x|:  (I - x_hat x_hat^T) / |x|
        double along = 0.0;
        for (std::size_t r = 0; r < d; ++r) along += grad_feat_hat[r] * feat_hat(r, i);
        for (std::size_t r = 0; r < d; ++r)
            out.grad_features(r, i) =
                (grad_feat_hat[r] - along * feat_hat(r, i)) / feat_norm[i];
    }

    for (std::size_t j = 0; j < n; ++j) {
        double along = 0.0;
        for (std::size_t r = 0; r < d; ++r) along += proto_hat_grad(r, j) * proto_hat(r, j);
        for (std::size_t r = 0; r < d; ++r)
            out.grad_prototypes(r, j) =
                (proto_hat_grad(r, j) - along * proto_hat(r, j)) / proto_norm[j];
    }

    out.loss = loss * inv_batch;
    return out;
}

LossResult inter_prototype_loss(const Matrix& prototypes, const std::vector<int>& child_ids) {
    const std::size_t d = prototypes.rows;
    const std::vector<int> ids = canonical_ids(child_ids, prototypes.cols, "inter_prototype_loss");
    if (ids.size() < 2) fail("inter_prototype_loss: need at least 2 child identities");
    require_finite(prototypes, "inter_prototype_loss: prototypes");

    const std::size_t k = ids.size();
    Matrix child(d, k);
    Vector norms(k);
    for (std::size_t a = 0; a < k; ++a) {
        const std::size_t j = static_cast<std::size_t>(ids[a]);
        norms[a] = col_norm(prototypes, j);
        if (!(norms[a] > 1e-300))
            fail("inter_prototype_loss: zero-norm prototype column " + std::to_string(ids[a]));
        for (std::size_t r = 0; r < d; ++r) child(r, a) = prototypes(r, j) / norms[a];
    }

    const Matrix c = matmul_at_b(child, child);

    double loss = 0.0;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b)
            if (a != b) loss += c(a, b) * c(a, b);

    // dL/d w_hat_a = 4 * sum_{b != a} C_ab w_hat_b, then through w/|w|.
    LossResult out;
    out.loss = loss;
    out.grad_features = Matrix(d, 0);
    out.grad_prototypes = Matrix(d, prototypes.cols);
    for (std::size_t a = 0; a < k; ++a) {
        Vector ghat(d, 0.0);
        for (std::size_t b = 0; b < k; ++b) {
            if (a == b) continue;
            const double w = 4.0 * c(a, b);
            for (std::size_t r = 0; r < d; ++r) ghat[r] += w * child(r, b);
        }
        double along = 0.0;
        for (std::size_t r = 0; r < d; ++r) along += ghat[r] * child(r, a);
        const std::size_t j = static_cast<std::size_t>(ids[a]);
        for (std::size_t r = 0; r < d; ++r)
            out.grad_prototypes(r, j) = (ghat[r] - along * child(r, a)) / norms[a];
    }
    return out;
}

LossResult total_loss(const Matrix& features, const Matrix& prototypes,
                      const std::vector<int>& labels, const std::vector<int>& child_ids,
                      const MarginConfig& cfg, const std::vector<bool>& is_child,
                      LossBreakdown* breakdown) {
    if (cfg.lambda_ip < 0.0) fail("total_loss: lambda_ip must be nonnegative");
    LossResult margin = margin_cross_entropy(features, prototypes, labels, cfg, is_child);
    if (breakdown) *breakdown = {margin.loss, 0.0};
    if (cfg.lambda_ip == 0.0) return margin;

    const LossResult ip = inter_prototype_loss(prototypes, child_ids);
    if (breakdown) breakdown->ip = ip.loss;
    margin.loss += cfg.lambda_ip * ip.loss;
    axpy_inplace(margin.grad_prototypes, cfg.lambda_ip, ip.grad_prototypes);
    return margin;
}

double mean_offdiag_abs_cosine(const Matrix& prototypes, const std::vector<int>& ids) {
    const std::vector<int> sorted = canonical_ids(ids, prototypes.cols, "mean_offdiag_abs_cosine");
    if (sorted.size() < 2) fail("mean_offdiag_abs_cosine: need at least 2 identities");
    const std::size_t d = prototypes.rows;
    Matrix sub(d, sorted.size());
    for (std::size_t a = 0; a < sorted.size(); ++a)
        sub.set_col(a, prototypes.col(static_cast<std::size_t>(sorted[a])));
    const Matrix c = cosine_matrix(sub, sub);
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t a = 0; a < c.rows; ++a)
        for (std::size_t b = 0; b < c.cols; ++b)
            if (a != b) {
                acc += std::abs(c(a, b));
                ++count;
            }
    return acc / static_cast<double>(count);
}

}  // namespace ipl
