#include "ipl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace ipl {
namespace {

constexpr int kBinLow[kAgeGroups] = {0, 13, 19, 26, 36, 46, 56, 66};
constexpr int kBinHigh[kAgeGroups] = {12, 18, 25, 35, 45, 55, 65, 120};

void append_double(std::string& out, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

Vector normalized_gaussian(Rng& rng, std::size_t dim) {
    Vector v(dim);
    double n = 0.0;
    // Unit latents: a zero draw is astronomically unlikely but retry anyway.
    do {
        for (std::size_t k = 0; k < dim; ++k) v[k] = rng.gaussian();
        n = 0.0;
        for (double x : v) n += x * x;
    } while (n == 0.0);
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
}

[[noreturn]] void line_error(std::size_t line, const std::string& what) {
    throw std::runtime_error("csv line " + std::to_string(line) + ": " + what);
}

long parse_int_field(const std::string& field, std::size_t line, const char* name) {
    long value = 0;
    const char* b = field.data();
    const char* e = b + field.size();
    auto res = std::from_chars(b, e, value);
    if (res.ec != std::errc() || res.ptr != e)
        line_error(line, std::string("field '") + name + "' is not an integer: '" + field + "'");
    return value;
}

double parse_double_field(const std::string& field, std::size_t line, std::size_t col) {
    double value = 0.0;
    const char* b = field.data();
    const char* e = b + field.size();
    auto res = std::from_chars(b, e, value);
    if (res.ec != std::errc() || res.ptr != e)
        line_error(line, "feature f" + std::to_string(col) + " is not numeric: '" + field + "'");
    return value;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

}  // namespace

int age_group_of(int age_years) {
    if (age_years < 0) throw std::invalid_argument("age_group_of: negative age");
    for (int g = 0; g < kAgeGroups - 1; ++g)
        if (age_years <= kBinHigh[g]) return g;
    return kAgeGroups - 1;
}

bool is_child_group(int age_group) { return age_group == 0; }

std::vector<int> child_class_index(const Dataset& ds) {
    std::set<int> ids;
    for (const Sample& s : ds.samples)
        if (is_child_group(s.age_group)) ids.insert(s.identity);
    return std::vector<int>(ids.begin(), ids.end());
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_identities < 2)
        throw std::invalid_argument("generate_synthetic: need at least 2 identities");
    if (spec.child_fraction < 0.0 || spec.child_fraction > 1.0)
        throw std::invalid_argument("generate_synthetic: child_fraction must be in [0,1]");
    if (spec.child_collapse < 0.0 || spec.child_collapse > 1.0)
        throw std::invalid_argument("generate_synthetic: child_collapse must be in [0,1]");
    if (spec.noise_sigma < 0.0)
        throw std::invalid_argument("generate_synthetic: noise_sigma must be >= 0");
    if (spec.feature_dim == 0)
        throw std::invalid_argument("generate_synthetic: feature_dim must be >= 1");
    if (spec.adult_samples_per_identity == 0 || spec.child_samples_per_identity == 0)
        throw std::invalid_argument("generate_synthetic: samples per identity must be >= 1");
    const auto n = spec.n_identities;
    const auto n_child = static_cast<std::size_t>(
        std::llround(spec.child_fraction * static_cast<double>(n)));
    if (n_child < 2)
        throw std::invalid_argument(
            "generate_synthetic: child_fraction * n_identities must round to >= 2");

    // Fixed stream ids per tensor so changing one knob never reshuffles the rest.
    Rng latent_rng(spec.seed, 0);
    Rng mode_rng(spec.seed, 1);
    Rng pick_rng(spec.seed, 2);
    Rng noise_rng(spec.seed, 3);
    Rng age_rng(spec.seed, 4);

    const std::size_t d = spec.feature_dim;
    std::vector<Vector> latents(n);
    for (std::size_t i = 0; i < n; ++i) latents[i] = normalized_gaussian(latent_rng, d);
    Vector child_mode = normalized_gaussian(mode_rng, d);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    pick_rng.shuffle(order);
    std::vector<bool> has_child(n, false);
    for (std::size_t k = 0; k < n_child; ++k) has_child[order[k]] = true;

    const double kappa = spec.child_collapse;
    Dataset ds;
    ds.n_identities = n;
    ds.feature_dim = d;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < spec.adult_samples_per_identity; ++s) {
            Sample smp;
            smp.identity = static_cast<int>(i);
            int bin = 3 + static_cast<int>(age_rng.index(3));  // 26-35, 36-45, 46-55
            smp.age_group = bin;
            smp.age_years =
                kBinLow[bin] + static_cast<int>(age_rng.index(
                                   static_cast<std::size_t>(kBinHigh[bin] - kBinLow[bin] + 1)));
            smp.features = latents[i];
            if (spec.noise_sigma > 0.0)
                for (double& x : smp.features) x += spec.noise_sigma * noise_rng.gaussian();
            ds.samples.push_back(std::move(smp));
        }
        if (!has_child[i]) continue;
        // Child base: kappa=1 is exactly the identity latent, kappa=0 exactly
        // the shared mode; in between, the normalized mix.
        Vector base;
        if (kappa == 1.0) {
            base = latents[i];
        } else if (kappa == 0.0) {
            base = child_mode;
        } else {
            base.resize(d);
            double norm = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                base[k] = kappa * latents[i][k] + (1.0 - kappa) * child_mode[k];
                norm += base[k] * base[k];
            }
            norm = std::sqrt(norm);
            if (norm < 1e-12)
                throw std::runtime_error("generate_synthetic: degenerate child mix");
            for (double& x : base) x /= norm;
        }
        for (std::size_t s = 0; s < spec.child_samples_per_identity; ++s) {
            Sample smp;
            smp.identity = static_cast<int>(i);
            smp.age_group = 0;
            smp.age_years = static_cast<int>(age_rng.index(13));  // 0-12
            smp.features = base;
            if (spec.noise_sigma > 0.0)
                for (double& x : smp.features) x += spec.noise_sigma * noise_rng.gaussian();
            ds.samples.push_back(std::move(smp));
        }
    }
    return ds;
}

std::string to_csv(const Dataset& ds) {
    std::string out = "identity,age_group,age_years";
    for (std::size_t k = 0; k < ds.feature_dim; ++k) {
        out += ",f";
        out += std::to_string(k);
    }
    out += '\n';
    for (const Sample& s : ds.samples) {
        if (s.features.size() != ds.feature_dim)
            throw std::invalid_argument("to_csv: sample feature width differs from dataset");
        out += std::to_string(s.identity);
        out += ',';
        out += std::to_string(s.age_group);
        out += ',';
        out += std::to_string(s.age_years);
        for (double f : s.features) {
            out += ',';
            append_double(out, f);
        }
        out += '\n';
    }
    return out;
}

Dataset load_csv_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv line 1: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    auto header = split_fields(line);
    if (header.size() < 4 || header[0] != "identity" || header[1] != "age_group" ||
        header[2] != "age_years")
        line_error(1, "header must be identity,age_group,age_years,f0..");
    const std::size_t d = header.size() - 3;
    for (std::size_t k = 0; k < d; ++k)
        if (header[3 + k] != "f" + std::to_string(k))
            line_error(1, "feature column " + std::to_string(3 + k) + " must be named f" +
                              std::to_string(k));

    Dataset ds;
    ds.feature_dim = d;
    std::unordered_map<long, int> remap;  // raw label -> dense id, first-seen order
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (fields.size() != 3 + d)
            line_error(lineno, "expected " + std::to_string(3 + d) + " fields, got " +
                                   std::to_string(fields.size()));
        Sample s;
        long raw = parse_int_field(fields[0], lineno, "identity");
        auto it = remap.find(raw);
        if (it == remap.end())
            it = remap.emplace(raw, static_cast<int>(remap.size())).first;
        s.identity = it->second;
        long group = parse_int_field(fields[1], lineno, "age_group");
        if (group < 0 || group >= kAgeGroups)
            line_error(lineno, "age_group " + std::to_string(group) + " out of range 0.." +
                                   std::to_string(kAgeGroups - 1));
        s.age_group = static_cast<int>(group);
        long years = parse_int_field(fields[2], lineno, "age_years");
        if (years < 0) line_error(lineno, "age_years must be >= 0");
        s.age_years = static_cast<int>(years);
        s.features.resize(d);
        for (std::size_t k = 0; k < d; ++k)
            s.features[k] = parse_double_field(fields[3 + k], lineno, k);
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw std::runtime_error("csv has no data rows");
    ds.n_identities = remap.size();
    return ds;
}

Dataset load_csv_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_csv_text(buf.str());
}

void write_csv_file(const Dataset& ds, const std::filesystem::path& path) {
    const std::string body = to_csv(ds);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

BatchSampler::BatchSampler(const Dataset& ds, std::size_t batch_size, std::optional<double> rho,
                           std::uint64_t seed)
    : batch_size_(batch_size), rho_(rho), rng_(seed) {
    if (batch_size == 0) throw std::invalid_argument("BatchSampler: batch_size must be >= 1");
    if (batch_size > ds.samples.size())
        throw std::invalid_argument("BatchSampler: batch_size exceeds dataset size");
    batches_per_epoch_ = ds.samples.size() / batch_size;
    all_.resize(ds.samples.size());
    for (std::size_t i = 0; i < all_.size(); ++i) all_[i] = i;
    if (!rho_) return;
    if (*rho_ < 0.0) throw std::invalid_argument("BatchSampler: rho must be >= 0");
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        if (is_child_group(ds.samples[i].age_group))
            child_pool_.push_back(i);
        else
            adult_pool_.push_back(i);
    }
    if (*rho_ > 0.0 && child_pool_.empty())
        throw std::invalid_argument("BatchSampler: rho > 0 but dataset has no child samples");
    if (adult_pool_.empty())
        throw std::invalid_argument("BatchSampler: oversampling needs adult samples");
}

std::vector<std::vector<std::size_t>> BatchSampler::next_epoch() {
    std::vector<std::vector<std::size_t>> batches;
    batches.reserve(batches_per_epoch_);
    if (!rho_) {
        rng_.shuffle(all_);
        for (std::size_t b = 0; b < batches_per_epoch_; ++b)
            batches.emplace_back(all_.begin() + static_cast<std::ptrdiff_t>(b * batch_size_),
                                 all_.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size_));
        return batches;
    }
    // Expected child count per batch is B*rho/(1+rho); the fractional part is
    // resolved by a Bernoulli draw so the long-run mean is exact.
    const double target = static_cast<double>(batch_size_) * *rho_ / (1.0 + *rho_);
    for (std::size_t b = 0; b < batches_per_epoch_; ++b) {
        std::size_t c = static_cast<std::size_t>(std::floor(target));
        const double frac = target - std::floor(target);
        if (frac > 0.0 && rng_.uniform() < frac) ++c;
        std::vector<std::size_t> batch;
        batch.reserve(batch_size_);
        for (std::size_t k = 0; k < c; ++k)
            batch.push_back(child_pool_[rng_.index(child_pool_.size())]);
        for (std::size_t k = c; k < batch_size_; ++k) {
            if (adult_pos_ >= adult_stream_.size()) {
                adult_stream_ = adult_pool_;
                rng_.shuffle(adult_stream_);
                adult_pos_ = 0;
            }
            batch.push_back(adult_stream_[adult_pos_++]);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

}  // namespace ipl
