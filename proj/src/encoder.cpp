#include "ipl/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ipl {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

Vector unit_gaussian(Rng& rng, std::size_t dim) {
    Vector v(dim);
    double n = 0.0;
    do {
        for (double& x : v) x = rng.gaussian();
        n = 0.0;
        for (double x : v) n += x * x;
    } while (n == 0.0);
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
}

}  // namespace

std::size_t EncoderParams::input_dim() const {
    if (layers.empty()) fail("encoder has no layers");
    return layers.front().weight.cols;
}

std::size_t EncoderParams::output_dim() const {
    if (layers.empty()) fail("encoder has no layers");
    return layers.back().weight.rows;
}

Matrix encode_forward(const EncoderParams& params, const Matrix& inputs, ForwardCache* cache) {
    if (params.layers.empty()) fail("encode_forward: encoder has no layers");
    if (inputs.rows != params.input_dim())
        fail("encode_forward: input has " + std::to_string(inputs.rows) +
             " rows, encoder expects " + std::to_string(params.input_dim()));
    require_finite(inputs, "encode_forward inputs");
    if (cache) {
        cache->input = inputs;
        cache->pre.clear();
        cache->act.clear();
    }
    Matrix a = inputs;
    for (const Layer& layer : params.layers) {
        if (layer.weight.cols != a.rows) fail("encode_forward: layer width mismatch");
        if (layer.bias.size() != layer.weight.rows) fail("encode_forward: bias size mismatch");
        Matrix z = matmul(layer.weight, a);
        for (std::size_t r = 0; r < z.rows; ++r)
            for (std::size_t c = 0; c < z.cols; ++c) z(r, c) += layer.bias[r];
        if (cache) cache->pre.push_back(z);
        if (layer.relu)
            for (double& v : z.data) v = v > 0.0 ? v : 0.0;
        if (cache) cache->act.push_back(z);
        a = std::move(z);
    }
    return a;
}

EncoderGrads encode_backward(const EncoderParams& params, const ForwardCache& cache,
                             const Matrix& grad_output) {
    const std::size_t n_layers = params.layers.size();
    if (n_layers == 0) fail("encode_backward: encoder has no layers");
    if (cache.pre.size() != n_layers || cache.act.size() != n_layers)
        fail("encode_backward: cache does not match the encoder's layer count");
    if (cache.input.rows != params.input_dim())
        fail("encode_backward: cached input does not match the encoder");
    if (!grad_output.same_shape(cache.act.back()))
        fail("encode_backward: gradient shape does not match the cached output");

    EncoderGrads grads(n_layers);
    Matrix delta = grad_output;
    for (std::size_t li = n_layers; li-- > 0;) {
        const Layer& layer = params.layers[li];
        if (!cache.pre[li].same_shape(delta))
            fail("encode_backward: cached activations do not match the encoder");
        if (layer.relu) {
            const Matrix& z = cache.pre[li];
            for (std::size_t k = 0; k < delta.data.size(); ++k)
                if (z.data[k] <= 0.0) delta.data[k] = 0.0;
        }
        const Matrix& below = li == 0 ? cache.input : cache.act[li - 1];
        grads[li].weight = matmul_a_bt(delta, below);
        grads[li].bias.assign(layer.weight.rows, 0.0);
        for (std::size_t r = 0; r < delta.rows; ++r)
            for (std::size_t c = 0; c < delta.cols; ++c) grads[li].bias[r] += delta(r, c);
        if (li > 0) delta = matmul_at_b(layer.weight, delta);
    }
    return grads;
}

EncoderParams init_encoder(std::size_t input_dim, std::size_t hidden_dim, std::size_t embed_dim,
                           std::uint64_t seed) {
    if (input_dim == 0 || hidden_dim == 0 || embed_dim == 0)
        fail("init_encoder: dimensions must be >= 1");
    EncoderParams params;
    const std::size_t dims[3] = {input_dim, hidden_dim, embed_dim};
    for (std::size_t l = 0; l < 2; ++l) {
        Layer layer;
        layer.weight = Matrix(dims[l + 1], dims[l]);
        layer.bias.assign(dims[l + 1], 0.0);
        layer.relu = (l == 0);
        // Kaiming-style: std sqrt(2/fan_in). Stream id is fixed per tensor.
        Rng rng(seed, 10 + l);
        const double sd = std::sqrt(2.0 / static_cast<double>(dims[l]));
        for (double& v : layer.weight.data) v = sd * rng.gaussian();
        params.layers.push_back(std::move(layer));
    }
    return params;
}

PrototypeHead init_prototypes(std::size_t embed_dim, std::size_t n_identities,
                              const std::vector<int>& child_ids, std::uint64_t seed) {
    if (embed_dim == 0 || n_identities == 0) fail("init_prototypes: dimensions must be >= 1");
    PrototypeHead head;
    head.w = Matrix(embed_dim, n_identities);
    Rng rng(seed, 20);
    for (std::size_t j = 0; j < n_identities; ++j) head.w.set_col(j, unit_gaussian(rng, embed_dim));
    head.child_ids = child_ids;
    std::sort(head.child_ids.begin(), head.child_ids.end());
    for (std::size_t k = 0; k < head.child_ids.size(); ++k) {
        int id = head.child_ids[k];
        if (id < 0 || static_cast<std::size_t>(id) >= n_identities)
            fail("init_prototypes: child id " + std::to_string(id) + " out of range");
        if (k > 0 && head.child_ids[k - 1] == id)
            fail("init_prototypes: duplicate child id " + std::to_string(id));
    }
    return head;
}

void sgd_step(EncoderParams& params, Matrix& prototypes, const EncoderGrads& grads,
              const Matrix& proto_grads, SgdState& state, const SgdHyper& hp) {
    const std::size_t n_layers = params.layers.size();
    if (grads.size() != n_layers) fail("sgd_step: gradient layer count mismatch");
    if (!proto_grads.same_shape(prototypes)) fail("sgd_step: prototype gradient shape mismatch");
    if (hp.learning_rate < 0.0) fail("sgd_step: learning_rate must be >= 0");
    if (hp.momentum < 0.0 || hp.momentum >= 1.0) fail("sgd_step: momentum must be in [0,1)");
    if (hp.weight_decay < 0.0) fail("sgd_step: weight_decay must be >= 0");

    if (state.velocity.empty() && state.proto_velocity.size() == 0) {
        state.velocity.resize(n_layers);
        for (std::size_t l = 0; l < n_layers; ++l) {
            state.velocity[l].weight =
                Matrix(params.layers[l].weight.rows, params.layers[l].weight.cols);
            state.velocity[l].bias.assign(params.layers[l].bias.size(), 0.0);
        }
        state.proto_velocity = Matrix(prototypes.rows, prototypes.cols);
    }
    if (state.velocity.size() != n_layers || !state.proto_velocity.same_shape(prototypes))
        fail("sgd_step: optimizer state does not match the parameters");

    for (std::size_t l = 0; l < n_layers; ++l) {
        Layer& layer = params.layers[l];
        const LayerTensors& g = grads[l];
        LayerTensors& v = state.velocity[l];
        if (!g.weight.same_shape(layer.weight) || g.bias.size() != layer.bias.size())
            fail("sgd_step: layer " + std::to_string(l) + " gradient shape mismatch");
        if (!all_finite(g.weight) || !all_finite(g.bias))
            throw std::runtime_error("sgd_step: non-finite gradient in layer " +
                                     std::to_string(l));
        // Weight decay touches weights only, never biases.
        for (std::size_t k = 0; k < layer.weight.data.size(); ++k) {
            double& vel = v.weight.data[k];
            vel = hp.momentum * vel + g.weight.data[k] + hp.weight_decay * layer.weight.data[k];
            layer.weight.data[k] -= hp.learning_rate * vel;
        }
        for (std::size_t k = 0; k < layer.bias.size(); ++k) {
            double& vel = v.bias[k];
            vel = hp.momentum * vel + g.bias[k];
            layer.bias[k] -= hp.learning_rate * vel;
        }
    }
    if (!all_finite(proto_grads))
        throw std::runtime_error("sgd_step: non-finite gradient for the prototype matrix");
    for (std::size_t k = 0; k < prototypes.data.size(); ++k) {
        double& vel = state.proto_velocity.data[k];
        vel = hp.momentum * vel + proto_grads.data[k] + hp.weight_decay * prototypes.data[k];
        prototypes.data[k] -= hp.learning_rate * vel;
    }
}

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
    if (epoch == 0) fail("learning_rate_at: epochs are 1-based");
    double lr = cfg.learning_rate;
    for (std::size_t e : cfg.decay_epochs)
        if (epoch >= e) lr *= cfg.decay_factor;
    return lr;
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
    if (ds.samples.empty()) fail("train: dataset is empty");
    if (ds.n_identities < 2) fail("train: need at least 2 identities");
    if (ds.feature_dim == 0) fail("train: dataset has no features");
    if (cfg.epochs == 0) fail("train: epochs must be >= 1");
    if (cfg.learning_rate < 0.0) fail("train: learning_rate must be >= 0");
    if (cfg.decay_factor <= 0.0 || cfg.decay_factor > 1.0)
        fail("train: decay_factor must be in (0,1]");
    for (std::size_t k = 0; k < cfg.decay_epochs.size(); ++k) {
        if (cfg.decay_epochs[k] == 0) fail("train: decay epochs are 1-based");
        if (k > 0 && cfg.decay_epochs[k] <= cfg.decay_epochs[k - 1])
            fail("train: decay epochs must be strictly increasing");
    }
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) fail("train: momentum must be in [0,1)");
    if (cfg.weight_decay < 0.0) fail("train: weight_decay must be >= 0");
    if (cfg.hidden_dim == 0 || cfg.embed_dim == 0) fail("train: encoder dims must be >= 1");
    for (const Sample& s : ds.samples) {
        if (s.identity < 0 || static_cast<std::size_t>(s.identity) >= ds.n_identities)
            fail("train: sample identity out of range");
        if (s.features.size() != ds.feature_dim) fail("train: ragged sample features");
    }

    const std::vector<int> child_ids = child_class_index(ds);
    MarginConfig margin = cfg.margin;
    std::vector<int> ip_ids;
    switch (cfg.apply_ip_to) {
        case ApplyIpTo::off:
            margin.lambda_ip = 0.0;
            break;
        case ApplyIpTo::child_only:
            ip_ids = child_ids;
            break;
        case ApplyIpTo::all_identities:
            ip_ids.resize(ds.n_identities);
            std::iota(ip_ids.begin(), ip_ids.end(), 0);
            break;
    }
    if (margin.lambda_ip > 0.0 && ip_ids.size() < 2)
        fail("train: the inter-prototype penalty needs at least 2 target identities");
    if (cfg.child_margin_override) {
        if (child_ids.empty()) fail("train: child margin override but no child identities");
        for (int id : child_ids) margin.class_margin_override[id] = *cfg.child_margin_override;
    }

    TrainResult out;
    out.encoder = init_encoder(ds.feature_dim, cfg.hidden_dim, cfg.embed_dim, cfg.seed);
    out.head = init_prototypes(cfg.embed_dim, ds.n_identities, child_ids, cfg.seed);
    out.ledger.run_id = cfg.run_id.empty() ? "run_s" + std::to_string(cfg.seed) : cfg.run_id;
    out.ledger.seed = cfg.seed;
    out.ledger.config_digest = cfg.config_digest;

    BatchSampler sampler(ds, cfg.batch_size, cfg.sampler_rho, mix_stream(cfg.seed, 30));
    const std::size_t dropped = ds.samples.size() - sampler.batches_per_epoch() * cfg.batch_size;
    if (!cfg.sampler_rho && dropped > 0)
        out.ledger.notes.push_back(std::to_string(dropped) +
                                   " trailing samples dropped per epoch (incomplete batch)");

    SgdState state;
    const bool track_child = child_ids.size() >= 2;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = learning_rate_at(cfg, epoch);
        const SgdHyper hp{lr, cfg.momentum, cfg.weight_decay};
        const auto batches = sampler.next_epoch();
        double sum_margin = 0.0, sum_ip = 0.0, sum_total = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& batch = batches[b];
            Matrix input(ds.feature_dim, batch.size());
            std::vector<int> labels(batch.size());
            std::vector<bool> flags(batch.size());
            for (std::size_t k = 0; k < batch.size(); ++k) {
                const Sample& s = ds.samples[batch[k]];
                for (std::size_t r = 0; r < ds.feature_dim; ++r) input(r, k) = s.features[r];
                labels[k] = s.identity;
                flags[k] = is_child_group(s.age_group);
            }
            ForwardCache cache;
            const Matrix feats = encode_forward(out.encoder, input, &cache);
            LossBreakdown parts;
            const LossResult res =
                total_loss(feats, out.head.w, labels, ip_ids, margin, flags, &parts);
            if (!std::isfinite(res.loss))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + " batch " + std::to_string(b));
            const EncoderGrads egrads = encode_backward(out.encoder, cache, res.grad_features);
            sgd_step(out.encoder, out.head.w, egrads, res.grad_prototypes, state, hp);
            sum_margin += parts.margin;
            sum_ip += parts.ip;
            sum_total += res.loss;
        }
        const double nb = static_cast<double>(batches.size());
        EpochRecord rec;
        rec.epoch = epoch;
        rec.margin_loss = sum_margin / nb;
        rec.ip_loss = sum_ip / nb;
        rec.total_loss = sum_total / nb;
        rec.learning_rate = lr;
        if (track_child) rec.child_offdiag_mean_abs = mean_offdiag_abs_cosine(out.head.w, child_ids);
        for (std::size_t j = 0; j < out.head.w.cols; ++j)
            if (col_norm(out.head.w, j) <= 1e-6)
                throw std::runtime_error("train: prototype " + std::to_string(j) +
                                         " collapsed to near-zero norm at epoch " +
                                         std::to_string(epoch));
        if (cfg.epoch_callback) cfg.epoch_callback(rec);
        out.ledger.epochs.push_back(std::move(rec));
    }
    out.ledger.final_child_offdiag_mean_abs = out.ledger.epochs.back().child_offdiag_mean_abs;
    return out;
}

namespace {

constexpr char kMagic[8] = {'I', 'P', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_matrix(std::string& out, const Matrix& m) {
    put_u32(out, static_cast<std::uint32_t>(m.rows));
    put_u32(out, static_cast<std::uint32_t>(m.cols));
    for (double v : m.data) put_f64(out, v);
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * k);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * k);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    Matrix matrix() {
        const std::size_t rows = u32();
        const std::size_t cols = u32();
        need(rows * cols * 8);
        Matrix m(rows, cols);
        for (double& v : m.data) v = f64();
        return m;
    }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                     const PrototypeHead& head, const std::string& config_digest) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(config_digest.size()));
    out += config_digest;
    put_u32(out, static_cast<std::uint32_t>(params.layers.size()));
    for (const Layer& layer : params.layers) {
        put_matrix(out, layer.weight);
        put_u32(out, static_cast<std::uint32_t>(layer.bias.size()));
        for (double v : layer.bias) put_f64(out, v);
        out.push_back(layer.relu ? 1 : 0);
    }
    put_matrix(out, head.w);
    put_u32(out, static_cast<std::uint32_t>(head.child_ids.size()));
    for (int id : head.child_ids) put_u32(out, static_cast<std::uint32_t>(id));

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + tmp.string());
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();

    ByteReader r{buf};
    r.need(sizeof(kMagic));
    if (buf.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error(path.string() + " is not a checkpoint file");
    r.pos = sizeof(kMagic);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    const std::size_t digest_len = r.u32();
    r.need(digest_len);
    ck.config_digest = buf.substr(r.pos, digest_len);
    r.pos += digest_len;

    const std::size_t n_layers = r.u32();
    if (n_layers == 0) throw std::runtime_error("checkpoint has no encoder layers");
    for (std::size_t l = 0; l < n_layers; ++l) {
        Layer layer;
        layer.weight = r.matrix();
        const std::size_t bias_len = r.u32();
        if (bias_len != layer.weight.rows)
            throw std::runtime_error("checkpoint layer bias size mismatch");
        layer.bias.resize(bias_len);
        for (double& v : layer.bias) v = r.f64();
        layer.relu = r.u8() != 0;
        if (!ck.encoder.layers.empty() &&
            layer.weight.cols != ck.encoder.layers.back().weight.rows)
            throw std::runtime_error("checkpoint layer dimensions do not chain");
        ck.encoder.layers.push_back(std::move(layer));
    }
    ck.head.w = r.matrix();
    if (ck.head.w.rows != ck.encoder.layers.back().weight.rows)
        throw std::runtime_error("checkpoint prototype dim does not match the encoder");
    const std::size_t n_child = r.u32();
    if (n_child > ck.head.w.cols) throw std::runtime_error("checkpoint child id count too large");
    ck.head.child_ids.resize(n_child);
    for (std::size_t k = 0; k < n_child; ++k) {
        const std::uint32_t id = r.u32();
        if (id >= ck.head.w.cols)
            throw std::runtime_error("checkpoint child id out of range");
        if (k > 0 && static_cast<std::uint32_t>(ck.head.child_ids[k - 1]) >= id)
            throw std::runtime_error("checkpoint child ids must be ascending");
        ck.head.child_ids[k] = static_cast<int>(id);
    }
    if (r.pos != buf.size()) throw std::runtime_error("checkpoint has trailing bytes");
    return ck;
}

}  // namespace ipl
