#include "ipl/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"

#include "ipl/eval.hpp"
#include "ipl/losses.hpp"

namespace ipl {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string utc_now_iso8601() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string fmt4(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::filesystem::path run_dir_of(const std::filesystem::path& root, Arm arm, std::uint64_t seed) {
    return root / arm_name(arm) / ("seed_" + std::to_string(seed));
}

Dataset load_dataset_checked(const ExperimentConfig& cfg, const std::filesystem::path& root) {
    const auto csv = root / "dataset.csv";
    const auto meta_path = root / "dataset.meta.json";
    if (!std::filesystem::exists(csv) || !std::filesystem::exists(meta_path))
        fail("no dataset under " + root.string() + "; run gen-data first");
    const json meta = json::parse(read_file(meta_path));
    const std::string expect = data_digest(cfg);
    if (meta.value("data_digest", std::string()) != expect)
        fail("dataset under " + root.string() +
             " was generated with different data settings; rerun gen-data");
    return load_csv_file(csv);
}

Checkpoint load_checkpoint_checked(const ExperimentConfig& cfg,
                                   const std::filesystem::path& run_dir) {
    const auto path = run_dir / "checkpoint.bin";
    if (!std::filesystem::exists(path)) fail("no checkpoint at " + path.string() + "; run train first");
    Checkpoint ck = load_checkpoint(path);
    const std::string expect = config_digest(cfg);
    if (ck.config_digest != expect)
        fail("checkpoint " + path.string() + " carries config digest " + ck.config_digest +
             ", expected " + expect);
    return ck;
}

void labels_of(const Dataset& ds, std::vector<int>& ids, std::vector<int>& groups) {
    ids.resize(ds.samples.size());
    groups.resize(ds.samples.size());
    for (std::size_t k = 0; k < ds.samples.size(); ++k) {
        ids[k] = ds.samples[k].identity;
        groups[k] = ds.samples[k].age_group;
    }
}

std::string gap_label(const std::optional<int>& gap) {
    return gap ? "gap>" + std::to_string(*gap) : "nogap";
}

std::string pair_file_name(const std::optional<int>& gap) {
    return gap ? "pairs_gap" + std::to_string(*gap) + ".csv" : "pairs_nogap.csv";
}

struct Stats {
    double mean = 0.0;
    std::optional<double> stdev;
    std::vector<double> values;
};

Stats make_stats(std::vector<double> values) {
    Stats s;
    s.values = std::move(values);
    if (s.values.empty()) fail("make_stats: no values");
    double acc = 0.0;
    for (double v : s.values) acc += v;
    s.mean = acc / static_cast<double>(s.values.size());
    if (s.values.size() >= 2) {
        double var = 0.0;
        for (double v : s.values) var += (v - s.mean) * (v - s.mean);
        s.stdev = std::sqrt(var / static_cast<double>(s.values.size() - 1));
    }
    return s;
}

json stats_json(const Stats& s) {
    json j;
    j["mean"] = s.mean;
    j["stdev"] = s.stdev ? json(*s.stdev) : json();
    j["values"] = s.values;
    return j;
}

std::string stats_cell(const Stats& s) {
    return s.stdev ? fmt4(s.mean) + " +- " + fmt4(*s.stdev) : fmt4(s.mean) + " +- n/a";
}

std::string render_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::string out;
    auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out += row[c];
            if (c + 1 < row.size()) out += std::string(width[c] - row[c].size() + 2, ' ');
        }
        out += '\n';
    };
    emit(header);
    std::vector<std::string> rule(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) rule[c] = std::string(width[c], '-');
    emit(rule);
    for (const auto& row : rows) emit(row);
    return out;
}

}  // namespace

void write_text_atomic(const std::filesystem::path& path, const std::string& body) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail("cannot write " + tmp.string());
        out.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!out) fail("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void cmd_gen_data(const ExperimentConfig& cfg, std::ostream& log) {
    const std::filesystem::path root = resolve_out_dir(cfg);
    std::filesystem::create_directories(root);
    const Dataset ds = generate_synthetic(cfg.data);
    write_csv_file(ds, root / "dataset.csv");

    std::size_t child_samples = 0;
    for (const Sample& s : ds.samples)
        if (is_child_group(s.age_group)) ++child_samples;
    const std::vector<int> child_ids = child_class_index(ds);

    json meta;
    meta["config_digest"] = config_digest(cfg);
    meta["data_digest"] = data_digest(cfg);
    meta["feature_dim"] = ds.feature_dim;
    meta["n_identities"] = ds.n_identities;
    meta["n_child_identities"] = child_ids.size();
    meta["n_samples"] = ds.samples.size();
    meta["n_child_samples"] = child_samples;
    meta["n_adult_samples"] = ds.samples.size() - child_samples;
    write_text_atomic(root / "dataset.meta.json", meta.dump(2) + "\n");

    log << "wrote " << (root / "dataset.csv").string() << " (" << ds.n_identities
        << " identities, " << child_ids.size() << " child; " << ds.samples.size() << " samples: "
        << child_samples << " child + " << ds.samples.size() - child_samples << " adult)\n";
}

void cmd_train(const ExperimentConfig& cfg, Arm arm, const std::vector<std::uint64_t>& seeds,
               std::ostream& log) {
    if (seeds.empty()) fail("cmd_train: no seeds");
    const std::filesystem::path root = resolve_out_dir(cfg);
    const Dataset ds = load_dataset_checked(cfg, root);
    for (std::uint64_t seed : seeds) {
        const std::filesystem::path run_dir = run_dir_of(root, arm, seed);
        std::filesystem::create_directories(run_dir);
        TrainConfig t = arm_train_config(cfg, arm, seed);

        // The ledger is append-only while the run is alive, so a crashed run
        // still leaves every finished epoch on disk.
        std::ofstream ledger(run_dir / "ledger.jsonl", std::ios::binary | std::ios::trunc);
        if (!ledger) fail("cannot write " + (run_dir / "ledger.jsonl").string());
        {
            json header;
            header["type"] = "run_header";
            header["run_id"] = t.run_id;
            header["arm"] = arm_name(arm);
            header["seed"] = seed;
            header["config_digest"] = t.config_digest;
            header["started_at"] = utc_now_iso8601();
            ledger << header.dump() << "\n" << std::flush;
        }
        t.epoch_callback = [&ledger](const EpochRecord& r) {
            json j;
            j["type"] = "epoch";
            j["epoch"] = r.epoch;
            j["margin_loss"] = r.margin_loss;
            j["ip_loss"] = r.ip_loss;
            j["total_loss"] = r.total_loss;
            j["learning_rate"] = r.learning_rate;
            j["child_offdiag_mean_abs"] =
                r.child_offdiag_mean_abs ? json(*r.child_offdiag_mean_abs) : json();
            ledger << j.dump() << "\n" << std::flush;
        };

        const TrainResult result = train(ds, t);
        {
            json fin;
            fin["type"] = "final";
            fin["epochs"] = result.ledger.epochs.size();
            fin["final_child_offdiag_mean_abs"] = result.ledger.final_child_offdiag_mean_abs
                                                      ? json(*result.ledger.final_child_offdiag_mean_abs)
                                                      : json();
            fin["notes"] = result.ledger.notes;
            ledger << fin.dump() << "\n" << std::flush;
        }
        save_checkpoint(run_dir / "checkpoint.bin", result.encoder, result.head, t.config_digest);

        const EpochRecord& last = result.ledger.epochs.back();
        log << "[" << t.run_id << "] epochs=" << result.ledger.epochs.size()
            << " final: total=" << fmt4(last.total_loss) << " margin=" << fmt4(last.margin_loss)
            << " ip=" << fmt4(last.ip_loss) << " child|cos|="
            << (last.child_offdiag_mean_abs ? fmt4(*last.child_offdiag_mean_abs) : "n/a") << " -> "
            << (run_dir / "checkpoint.bin").string() << "\n";
    }
}

void cmd_eval(const ExperimentConfig& cfg, Arm arm, const std::vector<std::uint64_t>& seeds,
              std::ostream& log) {
    if (seeds.empty()) fail("cmd_eval: no seeds");
    if (cfg.eval_gaps.empty()) fail("cmd_eval: eval.gaps is empty");
    const std::filesystem::path root = resolve_out_dir(cfg);
    const Dataset ds = load_dataset_checked(cfg, root);
    for (std::uint64_t seed : seeds) {
        const std::filesystem::path run_dir = run_dir_of(root, arm, seed);
        const Checkpoint ck = load_checkpoint_checked(cfg, run_dir);
        const Matrix embeddings = embed_dataset(ck.encoder, ds);
        const std::string run_id = std::string(arm_name(arm)) + "_s" + std::to_string(seed);

        json metrics;
        metrics["arm"] = arm_name(arm);
        metrics["seed"] = seed;
        metrics["run_id"] = run_id;
        metrics["config_digest"] = config_digest(cfg);

        std::string summary = "[" + run_id + "]";
        json ver_list = json::array();
        for (const auto& gap : cfg.eval_gaps) {
            const PairSet pairs =
                build_verification_pairs(ds, gap, cfg.eval_pair_count, cfg.eval_seed);
            write_text_atomic(run_dir / pair_file_name(gap), pair_set_to_csv(pairs));
            const VerificationReport rep = verification_accuracy(embeddings, pairs);
            json v;
            v["gap"] = gap ? json(*gap) : json();
            v["accuracy"] = rep.accuracy;
            v["threshold"] = rep.threshold;
            v["n_pairs"] = pairs.pairs.size();
            ver_list.push_back(v);
            summary += " ver " + gap_label(gap) + ": " + fmt4(rep.accuracy) + " (thr " +
                       fmt4(rep.threshold) + ") |";
        }
        metrics["verification"] = ver_list;

        const std::optional<int> id_gap = cfg.eval_gaps.front();
        const IdentificationSplit split = build_identification_split(ds, id_gap, cfg.eval_seed);
        const Rank1Report rank1 = rank1_identification(embeddings, split);
        json r;
        r["gap"] = id_gap ? json(*id_gap) : json();
        r["accuracy"] = rank1.accuracy;
        r["n_probes"] = rank1.n_probes;
        r["n_gallery"] = rank1.n_gallery;
        metrics["rank1"] = r;
        summary += " rank1 " + gap_label(id_gap) + ": " + fmt4(rank1.accuracy) + " (" +
                   std::to_string(rank1.n_probes) + " probes / " +
                   std::to_string(rank1.n_gallery) + " gallery)";

        if (ck.head.child_ids.size() >= 2) {
            const double offdiag = mean_offdiag_abs_cosine(ck.head.w, ck.head.child_ids);
            metrics["child_prototype_mean_abs_offdiag"] = offdiag;
            summary += " | child |cos| " + fmt4(offdiag);
        } else {
            metrics["child_prototype_mean_abs_offdiag"] = json();
        }

        write_text_atomic(run_dir / "metrics.json", metrics.dump(2) + "\n");
        log << summary << "\n";
    }
}

void cmd_analyze(const ExperimentConfig& cfg, Arm arm, const std::vector<std::uint64_t>& seeds,
                 std::ostream& log) {
    if (seeds.empty()) fail("cmd_analyze: no seeds");
    const std::filesystem::path root = resolve_out_dir(cfg);
    const Dataset ds = load_dataset_checked(cfg, root);
    std::vector<int> ids, groups;
    labels_of(ds, ids, groups);
    for (std::uint64_t seed : seeds) {
        const std::filesystem::path run_dir = run_dir_of(root, arm, seed);
        const Checkpoint ck = load_checkpoint_checked(cfg, run_dir);
        const Matrix embeddings = embed_dataset(ck.encoder, ds);
        const std::string run_id = std::string(arm_name(arm)) + "_s" + std::to_string(seed);
        const std::filesystem::path out = run_dir / "analysis";
        std::filesystem::create_directories(out);

        json summary;
        summary["arm"] = arm_name(arm);
        summary["seed"] = seed;
        summary["run_id"] = run_id;
        summary["config_digest"] = config_digest(cfg);

        // Child-child similarity map, intra-class values on the diagonal.
        const InterClassResult inter =
            inter_class_similarity(embeddings, ids, groups, RoleFilter::child);
        const IntraClassResult intra =
            intra_class_similarity(embeddings, ck.head.w, ids, groups, RoleFilter::child);
        if (intra.identities != inter.identities)
            fail("cmd_analyze: intra and inter identity sets diverge");
        Matrix child_map = inter.matrix;
        double inter_off = 0.0;
        for (std::size_t k = 0; k < intra.identities.size(); ++k)
            child_map(k, k) = intra.values[k];
        {
            std::size_t cnt = 0;
            for (std::size_t i = 0; i < inter.matrix.rows; ++i)
                for (std::size_t j = 0; j < inter.matrix.cols; ++j)
                    if (i != j) {
                        inter_off += inter.matrix(i, j);
                        ++cnt;
                    }
            inter_off = cnt == 0 ? 0.0 : inter_off / static_cast<double>(cnt);
        }
        write_text_atomic(out / "child_child_similarity.csv",
                          export_heatmap(child_map, HeatmapFormat::csv));
        write_text_atomic(out / "child_child_similarity.pgm",
                          export_heatmap(child_map, HeatmapFormat::pgm));
        summary["child_child_offdiag_mean"] = inter_off;

        double intra_child_mean = 0.0;
        for (double v : intra.values) intra_child_mean += v;
        intra_child_mean /= static_cast<double>(intra.values.size());
        summary["intra_child_mean"] = intra_child_mean;

        const IntraClassResult intra_adult =
            intra_class_similarity(embeddings, ck.head.w, ids, groups, RoleFilter::adult);
        double intra_adult_mean = 0.0;
        for (double v : intra_adult.values) intra_adult_mean += v;
        intra_adult_mean /= static_cast<double>(intra_adult.values.size());
        summary["intra_adult_mean"] = intra_adult_mean;

        // Child-vs-adult map; the diagonal tracks the same identity across roles.
        const CrossRoleResult cross = cross_role_similarity(embeddings, ids, groups,
                                                            RoleFilter::child, RoleFilter::adult);
        write_text_atomic(out / "child_adult_similarity.csv",
                          export_heatmap(cross.matrix, HeatmapFormat::csv));
        write_text_atomic(out / "child_adult_similarity.pgm",
                          export_heatmap(cross.matrix, HeatmapFormat::pgm));
        double diag = 0.0, offdiag = 0.0;
        std::size_t offcnt = 0;
        for (std::size_t i = 0; i < cross.matrix.rows; ++i)
            for (std::size_t j = 0; j < cross.matrix.cols; ++j) {
                if (i == j)
                    diag += cross.matrix(i, j);
                else {
                    offdiag += cross.matrix(i, j);
                    ++offcnt;
                }
            }
        summary["child_adult_diag_mean"] = diag / static_cast<double>(cross.matrix.rows);
        summary["child_adult_offdiag_mean"] =
            offcnt == 0 ? 0.0 : offdiag / static_cast<double>(offcnt);

        const PrototypeSimilarityResult all_gram = [&] {
            std::vector<int> all(ck.head.w.cols);
            for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<int>(k);
            return prototype_similarity(ck.head, all);
        }();
        write_text_atomic(out / "prototype_gram.csv",
                          export_heatmap(all_gram.matrix, HeatmapFormat::csv));
        write_text_atomic(out / "prototype_gram.pgm",
                          export_heatmap(all_gram.matrix, HeatmapFormat::pgm));
        summary["prototype_mean_abs_offdiag"] = all_gram.mean_offdiag_abs;

        if (!ck.head.child_ids.empty()) {
            const PrototypeSimilarityResult child_gram =
                prototype_similarity(ck.head, ck.head.child_ids);
            write_text_atomic(out / "child_prototype_gram.csv",
                              export_heatmap(child_gram.matrix, HeatmapFormat::csv));
            write_text_atomic(out / "child_prototype_gram.pgm",
                              export_heatmap(child_gram.matrix, HeatmapFormat::pgm));
            summary["child_prototype_mean_abs_offdiag"] = child_gram.mean_offdiag_abs;
        } else {
            summary["child_prototype_mean_abs_offdiag"] = json();
        }

        const ProjectedPrototypes proj = project_prototypes_2d(ck.head);
        write_text_atomic(out / "projection_2d.csv", projection_to_csv(proj));
        summary["projection_rank_deficient"] = proj.rank_deficient;

        write_text_atomic(out / "summary.json", summary.dump(2) + "\n");
        log << "[" << run_id << "] child-child offdiag " << fmt4(inter_off)
            << " | child-adult diag " << fmt4(summary["child_adult_diag_mean"].get<double>())
            << " offdiag " << fmt4(summary["child_adult_offdiag_mean"].get<double>())
            << " | child proto |cos| "
            << (ck.head.child_ids.empty()
                    ? "n/a"
                    : fmt4(summary["child_prototype_mean_abs_offdiag"].get<double>()))
            << " -> " << out.string() << "\n";
    }
}

void cmd_compare(const ExperimentConfig& cfg, const std::vector<Arm>& arms, std::ostream& log) {
    if (arms.empty()) fail("cmd_compare: no arms");
    if (cfg.seeds.empty()) fail("cmd_compare: no seeds");
    const std::filesystem::path root = resolve_out_dir(cfg);
    const std::string expect = config_digest(cfg);

    std::vector<std::string> gap_labels;
    bool gaps_known = false;
    json arms_json;
    std::vector<std::vector<std::string>> table_rows;
    for (Arm arm : arms) {
        std::vector<std::vector<double>> ver_values;  // per gap, per seed
        std::vector<double> rank1_values, child_values;
        bool child_present = true;
        for (std::uint64_t seed : cfg.seeds) {
            const auto path = run_dir_of(root, arm, seed) / "metrics.json";
            if (!std::filesystem::exists(path))
                fail("missing " + path.string() + "; run eval first");
            const json m = json::parse(read_file(path));
            const std::string digest = m.value("config_digest", std::string());
            if (digest != expect)
                fail("metrics " + path.string() + " carry config digest " + digest +
                     ", expected " + expect + "; outputs from different configurations "
                     "cannot be compared");
            const json& ver = m.at("verification");
            if (!gaps_known) {
                for (const json& v : ver)
                    gap_labels.push_back(
                        gap_label(v.at("gap").is_null()
                                      ? std::optional<int>()
                                      : std::optional<int>(v.at("gap").get<int>())));
                ver_values.resize(gap_labels.size());
                gaps_known = true;
            }
            if (ver.size() != gap_labels.size())
                fail("metrics " + path.string() + " report a different gap list");
            if (ver_values.empty()) ver_values.resize(gap_labels.size());
            for (std::size_t g = 0; g < gap_labels.size(); ++g)
                ver_values[g].push_back(ver[g].at("accuracy").get<double>());
            rank1_values.push_back(m.at("rank1").at("accuracy").get<double>());
            if (m.at("child_prototype_mean_abs_offdiag").is_null())
                child_present = false;
            else
                child_values.push_back(m.at("child_prototype_mean_abs_offdiag").get<double>());
        }

        json arm_json;
        std::vector<std::string> row{arm_name(arm)};
        json ver_json = json::array();
        for (std::size_t g = 0; g < gap_labels.size(); ++g) {
            const Stats s = make_stats(ver_values[g]);
            json vj = stats_json(s);
            vj["label"] = gap_labels[g];
            ver_json.push_back(vj);
            row.push_back(stats_cell(s));
        }
        arm_json["verification"] = ver_json;
        const Stats rs = make_stats(rank1_values);
        arm_json["rank1"] = stats_json(rs);
        row.push_back(stats_cell(rs));
        if (child_present) {
            const Stats cs = make_stats(child_values);
            arm_json["child_prototype_mean_abs_offdiag"] = stats_json(cs);
            row.push_back(stats_cell(cs));
        } else {
            arm_json["child_prototype_mean_abs_offdiag"] = json();
            row.push_back("n/a");
        }
        arms_json[arm_name(arm)] = arm_json;
        table_rows.push_back(std::move(row));
    }

    std::vector<std::string> header{"arm"};
    for (const std::string& gl : gap_labels) header.push_back("ver " + gl);
    header.push_back("rank1");
    header.push_back("child |cos|");
    const std::string table = render_table(header, table_rows);

    json report;
    report["config_digest"] = expect;
    report["seeds"] = cfg.seeds;
    report["arms"] = arms_json;
    write_text_atomic(root / "comparison.json", report.dump(2) + "\n");
    std::string txt = "config_digest: " + expect + "\n";
    txt += "seeds:";
    for (std::uint64_t s : cfg.seeds) txt += " " + std::to_string(s);
    txt += "\n\n" + table;
    write_text_atomic(root / "comparison.txt", txt);
    log << txt;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"prototype-level child face recognition laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::vector<std::uint64_t> seeds_override;
    std::string arm_str;
    std::vector<std::string> compare_arm_names;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "flat key = value config file");
        sub->add_option("--out", out_override, "output root (overrides config and environment)");
    };
    auto add_run_selectors = [&](CLI::App* sub) {
        sub->add_option("--seed", seeds_override, "seed, repeatable (default: config seeds)");
        sub->add_option("--arm", arm_str, "experiment arm")->required();
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    add_common(gen);
    CLI::App* train_cmd = app.add_subcommand("train", "train one arm across seeds");
    add_common(train_cmd);
    add_run_selectors(train_cmd);
    CLI::App* eval_cmd = app.add_subcommand("eval", "verification and identification metrics");
    add_common(eval_cmd);
    add_run_selectors(eval_cmd);
    CLI::App* analyze_cmd = app.add_subcommand("analyze", "similarity maps and projections");
    add_common(analyze_cmd);
    add_run_selectors(analyze_cmd);
    CLI::App* compare_cmd = app.add_subcommand("compare", "aggregate metrics across arms");
    add_common(compare_cmd);
    compare_cmd->add_option("arms", compare_arm_names,
                            "arms to compare (default: baseline ip)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        ExperimentConfig cfg =
            config_path.empty() ? default_config() : load_config_file(config_path);
        if (!out_override.empty()) cfg.out_dir = out_override;
        std::vector<std::uint64_t> seeds = seeds_override.empty() ? cfg.seeds : seeds_override;
        {
            std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
            if (distinct.size() != seeds.size()) fail("seeds must be distinct");
        }
        auto need_arm = [&]() -> Arm {
            auto a = arm_from_name(arm_str);
            if (!a)
                fail("unknown arm '" + arm_str +
                     "' (valid: baseline, ip, ip_full, reweight, margin_up, oversample)");
            return *a;
        };
        if (gen->parsed()) {
            cmd_gen_data(cfg, std::cout);
        } else if (train_cmd->parsed()) {
            cmd_train(cfg, need_arm(), seeds, std::cout);
        } else if (eval_cmd->parsed()) {
            cmd_eval(cfg, need_arm(), seeds, std::cout);
        } else if (analyze_cmd->parsed()) {
            cmd_analyze(cfg, need_arm(), seeds, std::cout);
        } else if (compare_cmd->parsed()) {
            std::vector<Arm> arms;
            if (compare_arm_names.empty()) {
                arms = {Arm::baseline, Arm::ip};
            } else {
                for (const std::string& name : compare_arm_names) {
                    auto a = arm_from_name(name);
                    if (!a) fail("unknown arm '" + name + "'");
                    arms.push_back(*a);
                }
            }
            cmd_compare(cfg, arms, std::cout);
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace ipl
