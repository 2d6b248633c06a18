#include "ipl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ipl/losses.hpp"

namespace ipl {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

[[noreturn]] void fail_at(std::size_t line, const std::string& msg) {
    fail("config line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = v.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(trim(v.substr(start)));
            return out;
        }
        out.push_back(trim(v.substr(start, pos - start)));
        start = pos + 1;
    }
}

double parse_double(const std::string& v, const std::string& key, std::size_t line) {
    double value = 0.0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), value);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        fail_at(line, "key '" + key + "' needs a number, got '" + v + "'");
    return value;
}

std::uint64_t parse_u64(const std::string& v, const std::string& key, std::size_t line) {
    std::uint64_t value = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), value);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        fail_at(line, "key '" + key + "' needs a nonnegative integer, got '" + v + "'");
    return value;
}

std::size_t parse_size(const std::string& v, const std::string& key, std::size_t line) {
    return static_cast<std::size_t>(parse_u64(v, key, line));
}

int parse_int(const std::string& v, const std::string& key, std::size_t line) {
    int value = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), value);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        fail_at(line, "key '" + key + "' needs an integer, got '" + v + "'");
    return value;
}

bool parse_bool(const std::string& v, const std::string& key, std::size_t line) {
    if (v == "true") return true;
    if (v == "false") return false;
    fail_at(line, "key '" + key + "' needs true or false, got '" + v + "'");
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (k > 0) out += ',';
        out += items[k];
    }
    return out;
}

struct KeyHandler {
    const char* key;
    bool in_digest;       // part of the experiment identity
    bool in_data_digest;  // part of the dataset identity
    void (*set)(ExperimentConfig&, const std::string&, std::size_t);
    std::string (*get)(const ExperimentConfig&);
};

// Sorted by key; canonical_config_text relies on that.
const KeyHandler kRegistry[] = {
    {"arm.margin_up_child_margin", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.margin_up_child_margin = parse_double(v, "arm.margin_up_child_margin", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.margin_up_child_margin); }},
    {"arm.oversample_rho", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.oversample_rho = parse_double(v, "arm.oversample_rho", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.oversample_rho); }},
    {"arm.reweight_child_weight", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.reweight_child_weight = parse_double(v, "arm.reweight_child_weight", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.reweight_child_weight); }},
    {"data.adult_samples_per_identity", true, true,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.data.adult_samples_per_identity = parse_size(v, "data.adult_samples_per_identity", ln);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.data.adult_samples_per_identity); }},
    {"data.child_collapse", true, true,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.data.child_collapse = parse_double(v, "data.child_collapse", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.data.child_collapse); }},
    {"data.child_fraction", true, true,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.data.child_fraction = parse_double(v, "data.child_fraction", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.data.child_fraction); }},
    {"data.child_samples_per_identity", true, true,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.data.child_samples_per_identity = parse_size(v, "data.child_samples_per_identity", ln);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.data.child_samples_per_identity); }},
    {"data.feature_dim", true, true,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.data.feature_dim = parse_size(v, "data.feature_dim", ln);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.data.feature_dim); }},
    {"data.n_identities", true, true,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.data.n_identities = parse_size(v, "data.n_identities", ln);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.data.n_identities); }},
    {"data.noise_sigma", true, true,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.data.noise_sigma = parse_double(v, "data.noise_sigma", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.data.noise_sigma); }},
    {"data.seed", true, true,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.data.seed = parse_u64(v, "data.seed", ln);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.data.seed); }},
    {"eval.gaps", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.eval_gaps.clear();
         for (const std::string& item : split_list(v)) {
             if (item == "none")
                 c.eval_gaps.push_back(std::nullopt);
             else
                 c.eval_gaps.push_back(parse_int(item, "eval.gaps", ln));
         }
         if (c.eval_gaps.empty()) fail_at(ln, "eval.gaps must list at least one entry");
     },
     [](const ExperimentConfig& c) {
         std::vector<std::string> items;
         for (const auto& g : c.eval_gaps) items.push_back(g ? std::to_string(*g) : "none");
         return join(items);
     }},
    {"eval.pair_count", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.eval_pair_count = parse_size(v, "eval.pair_count", ln);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.eval_pair_count); }},
    {"eval.seed", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.eval_seed = parse_u64(v, "eval.seed", ln);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.eval_seed); }},
    {"loss.arcface_easy_margin", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.margin.arcface_easy_margin = parse_bool(v, "loss.arcface_easy_margin", ln);
     },
     [](const ExperimentConfig& c) {
         return std::string(c.train.margin.arcface_easy_margin ? "true" : "false");
     }},
    {"loss.kind", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         auto kind = margin_kind_from_name(v);
         if (!kind) fail_at(ln, "loss.kind must be softmax, cosface or arcface, got '" + v + "'");
         c.train.margin.kind = *kind;
     },
     [](const ExperimentConfig& c) { return std::string(margin_kind_name(c.train.margin.kind)); }},
    {"loss.lambda_ip", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.margin.lambda_ip = parse_double(v, "loss.lambda_ip", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.train.margin.lambda_ip); }},
    {"loss.margin", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.margin.margin = parse_double(v, "loss.margin", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.train.margin.margin); }},
    {"loss.scale", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.margin.scale = parse_double(v, "loss.scale", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.train.margin.scale); }},
    {"output.dir", false, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t) { c.out_dir = v; },
     [](const ExperimentConfig& c) { return c.out_dir; }},
    {"seeds", false, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.seeds.clear();
         for (const std::string& item : split_list(v))
             c.seeds.push_back(parse_u64(item, "seeds", ln));
         if (c.seeds.empty()) fail_at(ln, "seeds must list at least one entry");
     },
     [](const ExperimentConfig& c) {
         std::vector<std::string> items;
         for (std::uint64_t s : c.seeds) items.push_back(std::to_string(s));
         return join(items);
     }},
    {"train.batch_size", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.batch_size = parse_size(v, "train.batch_size", ln);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.train.batch_size); }},
    {"train.decay_epochs", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.decay_epochs.clear();
         for (const std::string& item : split_list(v))
             c.train.decay_epochs.push_back(parse_size(item, "train.decay_epochs", ln));
     },
     [](const ExperimentConfig& c) {
         std::vector<std::string> items;
         for (std::size_t e : c.train.decay_epochs) items.push_back(std::to_string(e));
         return join(items);
     }},
    {"train.decay_factor", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.decay_factor = parse_double(v, "train.decay_factor", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.train.decay_factor); }},
    {"train.embed_dim", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.embed_dim = parse_size(v, "train.embed_dim", ln);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.train.embed_dim); }},
    {"train.epochs", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.epochs = parse_size(v, "train.epochs", ln);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.train.epochs); }},
    {"train.hidden_dim", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.hidden_dim = parse_size(v, "train.hidden_dim", ln);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.train.hidden_dim); }},
    {"train.learning_rate", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.learning_rate = parse_double(v, "train.learning_rate", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.train.learning_rate); }},
    {"train.momentum", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.momentum = parse_double(v, "train.momentum", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.train.momentum); }},
    {"train.weight_decay", true, false,
     [](ExperimentConfig& c, const std::string& v, std::size_t ln) {
         c.train.weight_decay = parse_double(v, "train.weight_decay", ln);
     },
     [](const ExperimentConfig& c) { return format_double(c.train.weight_decay); }},
};

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int k = 15; k >= 0; --k) {
        out[static_cast<std::size_t>(k)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace

ExperimentConfig default_config() { return {}; }

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) fail_at(lineno, "expected 'key = value'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) fail_at(lineno, "expected 'key = value'");

        const KeyHandler* handler = nullptr;
        for (const KeyHandler& h : kRegistry)
            if (key == h.key) {
                handler = &h;
                break;
            }
        if (!handler) fail_at(lineno, "unknown key '" + key + "'");
        if (!seen.insert(key).second) fail_at(lineno, "key '" + key + "' given twice");
        handler->set(cfg, value, lineno);
    }
    std::set<std::uint64_t> distinct(cfg.seeds.begin(), cfg.seeds.end());
    if (distinct.size() != cfg.seeds.size()) fail("config: seeds must be distinct");
    return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string canonical_config_text(const ExperimentConfig& cfg) {
    std::string out;
    for (const KeyHandler& h : kRegistry) {
        out += h.key;
        out += " = ";
        out += h.get(cfg);
        out += '\n';
    }
    return out;
}

std::string config_digest(const ExperimentConfig& cfg) {
    std::string text;
    for (const KeyHandler& h : kRegistry) {
        if (!h.in_digest) continue;
        text += h.key;
        text += " = ";
        text += h.get(cfg);
        text += '\n';
    }
    return hex64(fnv1a64(text));
}

std::string data_digest(const ExperimentConfig& cfg) {
    std::string text;
    for (const KeyHandler& h : kRegistry) {
        if (!h.in_data_digest) continue;
        text += h.key;
        text += " = ";
        text += h.get(cfg);
        text += '\n';
    }
    return hex64(fnv1a64(text));
}

std::string resolve_out_dir(const ExperimentConfig& cfg) {
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    if (const char* env = std::getenv("INTERPROTO_OUT"); env && *env) return env;
    return "runs";
}

const char* arm_name(Arm a) {
    switch (a) {
        case Arm::baseline: return "baseline";
        case Arm::ip: return "ip";
        case Arm::ip_full: return "ip_full";
        case Arm::reweight: return "reweight";
        case Arm::margin_up: return "margin_up";
        case Arm::oversample: return "oversample";
    }
    return "?";
}

std::optional<Arm> arm_from_name(const std::string& name) {
    for (Arm a : all_arms())
        if (name == arm_name(a)) return a;
    return std::nullopt;
}

const std::vector<Arm>& all_arms() {
    static const std::vector<Arm> arms = {Arm::baseline, Arm::ip,        Arm::ip_full,
                                          Arm::reweight, Arm::margin_up, Arm::oversample};
    return arms;
}

TrainConfig arm_train_config(const ExperimentConfig& cfg, Arm arm, std::uint64_t seed) {
    TrainConfig t = cfg.train;
    t.seed = seed;
    t.run_id = std::string(arm_name(arm)) + "_s" + std::to_string(seed);
    t.config_digest = config_digest(cfg);
    switch (arm) {
        case Arm::baseline:
            t.apply_ip_to = ApplyIpTo::off;
            break;
        case Arm::ip:
            t.apply_ip_to = ApplyIpTo::child_only;
            break;
        case Arm::ip_full:
            t.apply_ip_to = ApplyIpTo::all_identities;
            break;
        case Arm::reweight:
            t.apply_ip_to = ApplyIpTo::off;
            t.margin.sample_weights = RoleWeights{cfg.reweight_child_weight, 1.0};
            break;
        case Arm::margin_up:
            t.apply_ip_to = ApplyIpTo::off;
            t.child_margin_override = cfg.margin_up_child_margin;
            break;
        case Arm::oversample:
            t.apply_ip_to = ApplyIpTo::off;
            t.sampler_rho = cfg.oversample_rho;
            break;
    }
    return t;
}

}  // namespace ipl
