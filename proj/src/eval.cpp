#include "ipl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ipl {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

bool role_matches(RoleFilter f, int age_group) {
    switch (f) {
        case RoleFilter::child: return is_child_group(age_group);
        case RoleFilter::adult: return !is_child_group(age_group);
        case RoleFilter::all: return true;
    }
    fail("unknown role filter");
}

double column_cosine(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j,
                     const char* what) {
    const double na = col_norm(a, i);
    const double nb = col_norm(b, j);
    if (na < 1e-300 || nb < 1e-300)
        fail(std::string(what) + ": zero-norm column " + std::to_string(na < 1e-300 ? i : j));
    return col_dot(a, i, b, j) / (na * nb);
}

void check_labels(const Matrix& embeddings, const std::vector<int>& identity_labels,
                  const std::vector<int>& age_groups, const char* what) {
    if (embeddings.cols == 0) fail(std::string(what) + ": no embeddings");
    if (identity_labels.size() != embeddings.cols || age_groups.size() != embeddings.cols)
        fail(std::string(what) + ": label arrays must match the embedding count");
    for (int g : age_groups)
        if (g < 0 || g >= kAgeGroups) fail(std::string(what) + ": age group out of range");
}

/// Sample indices per identity under the filter; identity keys ascending.
std::vector<std::pair<int, std::vector<std::size_t>>> group_by_identity(
    const std::vector<int>& identity_labels, const std::vector<int>& age_groups,
    RoleFilter filter) {
    std::vector<std::pair<int, std::vector<std::size_t>>> groups;
    std::vector<int> order(identity_labels.begin(), identity_labels.end());
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());
    for (int id : order) {
        std::vector<std::size_t> members;
        for (std::size_t k = 0; k < identity_labels.size(); ++k)
            if (identity_labels[k] == id && role_matches(filter, age_groups[k]))
                members.push_back(k);
        if (!members.empty()) groups.emplace_back(id, std::move(members));
    }
    return groups;
}

}  // namespace

const char* role_filter_name(RoleFilter f) {
    switch (f) {
        case RoleFilter::child: return "child";
        case RoleFilter::adult: return "adult";
        case RoleFilter::all: return "all";
    }
    return "?";
}

Matrix embed_dataset(const EncoderParams& params, const Dataset& ds) {
    if (ds.samples.empty()) fail("embed_dataset: dataset is empty");
    Matrix input(ds.feature_dim, ds.samples.size());
    for (std::size_t k = 0; k < ds.samples.size(); ++k) {
        if (ds.samples[k].features.size() != ds.feature_dim)
            fail("embed_dataset: ragged sample features");
        for (std::size_t r = 0; r < ds.feature_dim; ++r)
            input(r, k) = ds.samples[k].features[r];
    }
    return encode_forward(params, input);
}

IntraClassResult intra_class_similarity(const Matrix& embeddings, const Matrix& prototypes,
                                        const std::vector<int>& identity_labels,
                                        const std::vector<int>& age_groups, RoleFilter filter) {
    check_labels(embeddings, identity_labels, age_groups, "intra_class_similarity");
    if (prototypes.rows != embeddings.rows)
        fail("intra_class_similarity: prototype dim does not match the embeddings");
    for (int id : identity_labels)
        if (id < 0 || static_cast<std::size_t>(id) >= prototypes.cols)
            fail("intra_class_similarity: identity " + std::to_string(id) +
                 " has no prototype column");

    IntraClassResult out;
    std::vector<int> all_ids(identity_labels.begin(), identity_labels.end());
    std::sort(all_ids.begin(), all_ids.end());
    all_ids.erase(std::unique(all_ids.begin(), all_ids.end()), all_ids.end());
    const auto groups = group_by_identity(identity_labels, age_groups, filter);
    for (int id : all_ids) {
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const auto& g) { return g.first == id; });
        if (it == groups.end()) {
            out.excluded.push_back(id);
            continue;
        }
        double acc = 0.0;
        for (std::size_t k : it->second)
            acc += column_cosine(embeddings, k, prototypes, static_cast<std::size_t>(id),
                                 "intra_class_similarity");
        out.identities.push_back(id);
        out.values.push_back(acc / static_cast<double>(it->second.size()));
    }
    if (out.identities.empty()) fail("intra_class_similarity: no identity passes the filter");
    return out;
}

InterClassResult inter_class_similarity(const Matrix& embeddings,
                                        const std::vector<int>& identity_labels,
                                        const std::vector<int>& age_groups, RoleFilter filter) {
    check_labels(embeddings, identity_labels, age_groups, "inter_class_similarity");
    const auto groups = group_by_identity(identity_labels, age_groups, filter);
    if (groups.size() < 2) fail("inter_class_similarity: needs samples from at least 2 identities");

    InterClassResult out;
    out.identities.reserve(groups.size());
    for (const auto& g : groups) out.identities.push_back(g.first);
    out.matrix = Matrix(groups.size(), groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        for (std::size_t j = i + 1; j < groups.size(); ++j) {
            double acc = 0.0;
            for (std::size_t a : groups[i].second)
                for (std::size_t b : groups[j].second)
                    acc += column_cosine(embeddings, a, embeddings, b, "inter_class_similarity");
            const double mean =
                acc / static_cast<double>(groups[i].second.size() * groups[j].second.size());
            out.matrix(i, j) = mean;
            out.matrix(j, i) = mean;
        }
    }
    return out;
}

CrossRoleResult cross_role_similarity(const Matrix& embeddings,
                                      const std::vector<int>& identity_labels,
                                      const std::vector<int>& age_groups, RoleFilter role_rows,
                                      RoleFilter role_cols) {
    check_labels(embeddings, identity_labels, age_groups, "cross_role_similarity");
    if (role_rows == role_cols)
        fail("cross_role_similarity: roles must differ (use inter_class_similarity)");
    const auto rows = group_by_identity(identity_labels, age_groups, role_rows);
    const auto cols = group_by_identity(identity_labels, age_groups, role_cols);

    CrossRoleResult out;
    for (const auto& r : rows) {
        const bool both = std::any_of(cols.begin(), cols.end(),
                                      [&](const auto& c) { return c.first == r.first; });
        if (both) out.identities.push_back(r.first);
    }
    if (out.identities.empty())
        fail("cross_role_similarity: no identity has samples in both roles");
    const std::size_t n = out.identities.size();
    out.matrix = Matrix(n, n);
    auto members = [&](const auto& groups, int id) -> const std::vector<std::size_t>& {
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const auto& g) { return g.first == id; });
        return it->second;
    };
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ri = members(rows, out.identities[i]);
        for (std::size_t j = 0; j < n; ++j) {
            const auto& cj = members(cols, out.identities[j]);
            double acc = 0.0;
            for (std::size_t a : ri)
                for (std::size_t b : cj)
                    acc += column_cosine(embeddings, a, embeddings, b, "cross_role_similarity");
            out.matrix(i, j) = acc / static_cast<double>(ri.size() * cj.size());
        }
    }
    return out;
}

PrototypeSimilarityResult prototype_similarity(const PrototypeHead& head,
                                               const std::vector<int>& subset) {
    if (subset.empty()) fail("prototype_similarity: subset is empty");
    std::vector<int> ids = subset;
    std::sort(ids.begin(), ids.end());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] < 0 || static_cast<std::size_t>(ids[k]) >= head.w.cols)
            fail("prototype_similarity: identity " + std::to_string(ids[k]) + " out of range");
        if (k > 0 && ids[k] == ids[k - 1])
            fail("prototype_similarity: duplicate identity " + std::to_string(ids[k]));
    }
    Matrix sub(head.w.rows, ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k)
        sub.set_col(k, head.w.col(static_cast<std::size_t>(ids[k])));

    PrototypeSimilarityResult out;
    out.identities = std::move(ids);
    out.matrix = cosine_matrix(sub, sub);
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < out.matrix.rows; ++i)
        for (std::size_t j = 0; j < out.matrix.cols; ++j)
            if (i != j) {
                acc += std::abs(out.matrix(i, j));
                ++count;
            }
    out.mean_offdiag_abs = count == 0 ? 0.0 : acc / static_cast<double>(count);
    return out;
}

PairSet build_verification_pairs(const Dataset& ds, std::optional<int> min_gap_years,
                                 std::size_t count, std::uint64_t seed) {
    if (count == 0) fail("build_verification_pairs: count must be >= 1");
    if (min_gap_years && *min_gap_years < 0)
        fail("build_verification_pairs: the age gap must be >= 0");
    std::vector<std::size_t> child_samples, adult_samples;
    for (std::size_t k = 0; k < ds.samples.size(); ++k) {
        if (is_child_group(ds.samples[k].age_group))
            child_samples.push_back(k);
        else
            adult_samples.push_back(k);
    }
    auto gap_ok = [&](std::size_t child_idx, std::size_t adult_idx) {
        if (!min_gap_years) return true;
        return ds.samples[adult_idx].age_years - ds.samples[child_idx].age_years >
               *min_gap_years;
    };

    std::vector<std::pair<std::size_t, std::size_t>> positives, negatives;
    for (std::size_t c : child_samples)
        for (std::size_t a : adult_samples) {
            if (!gap_ok(c, a)) continue;
            if (ds.samples[c].identity == ds.samples[a].identity)
                positives.emplace_back(c, a);
            else
                negatives.emplace_back(c, a);
        }
    if (positives.size() < count)
        fail("build_verification_pairs: requested " + std::to_string(count) +
             " positive pairs but only " + std::to_string(positives.size()) + " qualify");
    if (negatives.size() < count)
        fail("build_verification_pairs: requested " + std::to_string(count) +
             " negative pairs but only " + std::to_string(negatives.size()) + " qualify");

    Rng pos_rng(seed, 0);
    Rng neg_rng(seed, 1);
    pos_rng.shuffle(positives);
    neg_rng.shuffle(negatives);

    PairSet out;
    out.min_age_gap = min_gap_years;
    auto push = [&](const std::pair<std::size_t, std::size_t>& p, bool same) {
        VerificationPair vp;
        vp.identity_a = ds.samples[p.first].identity;
        vp.sample_a = p.first;
        vp.identity_b = ds.samples[p.second].identity;
        vp.sample_b = p.second;
        vp.same = same;
        vp.age_a = ds.samples[p.first].age_years;
        vp.age_b = ds.samples[p.second].age_years;
        out.pairs.push_back(vp);
    };
    for (std::size_t k = 0; k < count; ++k) push(positives[k], true);
    for (std::size_t k = 0; k < count; ++k) push(negatives[k], false);
    return out;
}

std::string pair_set_to_csv(const PairSet& pairs) {
    std::string out = "# gap_rule: ";
    if (pairs.min_age_gap)
        out += "adult_age - child_age > " + std::to_string(*pairs.min_age_gap) + " (strict)";
    else
        out += "none";
    out += "\nidentity_a,sample_a,identity_b,sample_b,label,age_a,age_b\n";
    for (const VerificationPair& p : pairs.pairs) {
        out += std::to_string(p.identity_a);
        out += ',';
        out += std::to_string(p.sample_a);
        out += ',';
        out += std::to_string(p.identity_b);
        out += ',';
        out += std::to_string(p.sample_b);
        out += p.same ? ",same," : ",different,";
        out += std::to_string(p.age_a);
        out += ',';
        out += std::to_string(p.age_b);
        out += '\n';
    }
    return out;
}

IdentificationSplit build_identification_split(const Dataset& ds,
                                               std::optional<int> min_gap_years,
                                               std::uint64_t seed) {
    if (min_gap_years && *min_gap_years < 0)
        fail("build_identification_split: the age gap must be >= 0");
    // Probe per child identity: its youngest child sample (lowest index on ties).
    std::vector<int> probe_of(ds.n_identities, -1);
    for (std::size_t k = 0; k < ds.samples.size(); ++k) {
        const Sample& s = ds.samples[k];
        if (!is_child_group(s.age_group)) continue;
        const int cur = probe_of[static_cast<std::size_t>(s.identity)];
        if (cur < 0 || s.age_years < ds.samples[static_cast<std::size_t>(cur)].age_years)
            probe_of[static_cast<std::size_t>(s.identity)] = static_cast<int>(k);
    }
    int max_probe_age = -1;
    for (int idx : probe_of)
        if (idx >= 0)
            max_probe_age = std::max(max_probe_age, ds.samples[static_cast<std::size_t>(idx)].age_years);
    if (max_probe_age < 0) fail("build_identification_split: dataset has no child samples");

    // Gallery adult must honor the gap against every probe, i.e. against the
    // oldest probe age.
    Rng rng(seed);
    IdentificationSplit out;
    for (std::size_t id = 0; id < ds.n_identities; ++id) {
        std::vector<std::size_t> candidates;
        for (std::size_t k = 0; k < ds.samples.size(); ++k) {
            const Sample& s = ds.samples[k];
            if (static_cast<std::size_t>(s.identity) != id) continue;
            if (is_child_group(s.age_group)) continue;
            if (min_gap_years && s.age_years - max_probe_age <= *min_gap_years) continue;
            candidates.push_back(k);
        }
        if (candidates.empty()) continue;
        out.gallery_identities.push_back(static_cast<int>(id));
        out.gallery_samples.push_back(candidates[rng.index(candidates.size())]);
        if (probe_of[id] >= 0) {
            out.probe_identities.push_back(static_cast<int>(id));
            out.probe_samples.push_back(static_cast<std::size_t>(probe_of[id]));
        }
    }
    if (out.gallery_identities.empty())
        fail("build_identification_split: no identity satisfies the gap rule");
    if (out.probe_identities.empty())
        fail("build_identification_split: no child identity kept a gallery entry");
    return out;
}

VerificationReport verification_accuracy(const Matrix& embeddings, const PairSet& pairs) {
    if (pairs.pairs.empty()) fail("verification_accuracy: pair set is empty");
    VerificationReport out;
    out.scores.reserve(pairs.pairs.size());
    for (const VerificationPair& p : pairs.pairs) {
        if (p.sample_a >= embeddings.cols || p.sample_b >= embeddings.cols)
            fail("verification_accuracy: pair references a sample without an embedding");
        out.scores.push_back(
            column_cosine(embeddings, p.sample_a, embeddings, p.sample_b,
                          "verification_accuracy"));
    }
    Vector sorted = out.scores;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    Vector thresholds;
    thresholds.push_back(sorted.front() - 1.0);
    for (std::size_t k = 0; k + 1 < sorted.size(); ++k)
        thresholds.push_back(0.5 * (sorted[k] + sorted[k + 1]));
    thresholds.push_back(sorted.back() + 1.0);

    double best_acc = -1.0;
    double best_t = 0.0;
    for (double t : thresholds) {
        std::size_t correct = 0;
        for (std::size_t k = 0; k < pairs.pairs.size(); ++k) {
            const bool predicted_same = out.scores[k] >= t;
            if (predicted_same == pairs.pairs[k].same) ++correct;
        }
        const double acc = static_cast<double>(correct) / static_cast<double>(pairs.pairs.size());
        if (acc > best_acc) {
            best_acc = acc;
            best_t = t;
        }
    }
    out.accuracy = best_acc;
    out.threshold = best_t;
    return out;
}

Rank1Report rank1_identification(const Matrix& embeddings, const IdentificationSplit& split) {
    if (split.gallery_samples.empty()) fail("rank1_identification: gallery is empty");
    if (split.probe_samples.empty()) fail("rank1_identification: no probes");
    if (split.gallery_identities.size() != split.gallery_samples.size() ||
        split.probe_identities.size() != split.probe_samples.size())
        fail("rank1_identification: split arrays are inconsistent");
    {
        std::vector<int> ids = split.gallery_identities;
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            fail("rank1_identification: gallery has a duplicate identity");
    }
    for (std::size_t k : split.gallery_samples)
        if (k >= embeddings.cols) fail("rank1_identification: gallery sample out of range");
    for (std::size_t k : split.probe_samples)
        if (k >= embeddings.cols) fail("rank1_identification: probe sample out of range");

    std::size_t correct = 0;
    for (std::size_t p = 0; p < split.probe_samples.size(); ++p) {
        double best = -2.0;
        std::size_t best_g = 0;
        for (std::size_t g = 0; g < split.gallery_samples.size(); ++g) {
            const double c = column_cosine(embeddings, split.probe_samples[p], embeddings,
                                           split.gallery_samples[g], "rank1_identification");
            if (c > best) {
                best = c;
                best_g = g;
            }
        }
        if (split.gallery_identities[best_g] == split.probe_identities[p]) ++correct;
    }
    Rank1Report out;
    out.n_probes = split.probe_samples.size();
    out.n_gallery = split.gallery_samples.size();
    out.accuracy = static_cast<double>(correct) / static_cast<double>(out.n_probes);
    return out;
}

std::string export_heatmap(const Matrix& m, HeatmapFormat fmt) {
    if (m.rows == 0 || m.cols == 0) fail("export_heatmap: empty matrix");
    require_finite(m, "export_heatmap");
    std::string out;
    if (fmt == HeatmapFormat::csv) {
        for (std::size_t r = 0; r < m.rows; ++r) {
            for (std::size_t c = 0; c < m.cols; ++c) {
                if (c > 0) out += ',';
                out += format_double(m(r, c));
            }
            out += '\n';
        }
        return out;
    }
    out = "P2\n" + std::to_string(m.cols) + " " + std::to_string(m.rows) + "\n255\n";
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            double v = m(r, c);
            if (v < -1.0 - 1e-9 || v > 1.0 + 1e-9)
                fail("export_heatmap: value " + format_double(v) + " at (" + std::to_string(r) +
                     "," + std::to_string(c) + ") is outside [-1, 1]");
            v = std::clamp(v, -1.0, 1.0);
            const int pixel = static_cast<int>(std::floor(255.0 * (v + 1.0) / 2.0 + 0.5));
            if (c > 0) out += ' ';
            out += std::to_string(pixel);
        }
        out += '\n';
    }
    return out;
}

ProjectedPrototypes project_prototypes_2d(const PrototypeHead& head) {
    auto normed = l2_normalize_columns(head.w, 1e-12);
    if (!normed.skipped.empty())
        fail("project_prototypes_2d: prototype column " + std::to_string(normed.skipped.front()) +
             " has near-zero norm");
    const Matrix points = transpose(normed.matrix);  // one row per prototype
    const Pca2d pca = pca_2d(points);

    ProjectedPrototypes out;
    out.coords = pca.coords;
    out.rank_deficient = pca.rank_deficient;
    out.identities.resize(head.w.cols);
    out.is_child.assign(head.w.cols, false);
    for (std::size_t j = 0; j < head.w.cols; ++j) out.identities[j] = static_cast<int>(j);
    for (int id : head.child_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= head.w.cols)
            fail("project_prototypes_2d: child id out of range");
        out.is_child[static_cast<std::size_t>(id)] = true;
    }
    return out;
}

std::string projection_to_csv(const ProjectedPrototypes& proj) {
    if (proj.coords.rows != proj.identities.size() || proj.coords.cols != 2)
        fail("projection_to_csv: malformed projection");
    std::string out = "identity,is_child,x,y\n";
    for (std::size_t k = 0; k < proj.identities.size(); ++k) {
        out += std::to_string(proj.identities[k]);
        out += proj.is_child[k] ? ",1," : ",0,";
        out += format_double(proj.coords(k, 0));
        out += ',';
        out += format_double(proj.coords(k, 1));
        out += '\n';
    }
    return out;
}

}  // namespace ipl
