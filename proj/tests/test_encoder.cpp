#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "ipl/data.hpp"
#include "ipl/encoder.hpp"
#include "ipl/matrix.hpp"

using namespace ipl;

namespace {

template <class F>
std::string thrown_message(F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.gaussian();
    return m;
}

Vector pack_params(const EncoderParams& p) {
    Vector out;
    for (const Layer& l : p.layers) {
        out.insert(out.end(), l.weight.data.begin(), l.weight.data.end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
}

void unpack_params(EncoderParams& p, const Vector& flat) {
    std::size_t pos = 0;
    for (Layer& l : p.layers) {
        std::copy(flat.begin() + pos, flat.begin() + pos + l.weight.size(),
                  l.weight.data.begin());
        pos += l.weight.size();
        std::copy(flat.begin() + pos, flat.begin() + pos + l.bias.size(), l.bias.begin());
        pos += l.bias.size();
    }
}

bool same_params(const EncoderParams& a, const EncoderParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        if (!(a.layers[l].weight == b.layers[l].weight) ||
            a.layers[l].bias != b.layers[l].bias || a.layers[l].relu != b.layers[l].relu)
            return false;
    return true;
}

Dataset small_dataset(std::uint64_t seed = 1) {
    SyntheticSpec spec;
    spec.n_identities = 6;
    spec.adult_samples_per_identity = 4;
    spec.child_samples_per_identity = 3;
    spec.feature_dim = 8;
    spec.seed = seed;
    return generate_synthetic(spec);
}

TrainConfig small_train_config() {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.hidden_dim = 12;
    cfg.embed_dim = 6;
    cfg.margin.kind = MarginKind::cosface;
    cfg.margin.scale = 12.0;
    cfg.margin.margin = 0.2;
    return cfg;
}

}  // namespace

TEST_CASE("forward pass matches a hand computation") {
    EncoderParams p;
    Layer l0;
    l0.weight = Matrix(2, 2);
    l0.weight.data = {1, 2, -1, 0};
    l0.bias = {0.5, -1.0};
    l0.relu = true;
    Layer l1;
    l1.weight = Matrix(1, 2);
    l1.weight.data = {1, 1};
    l1.bias = {2.0};
    p.layers = {l0, l1};

    Matrix in(2, 1);
    in(0, 0) = 3.0;
    in(1, 0) = 4.0;
    const Matrix out = encode_forward(p, in);
    REQUIRE(out.rows == 1);
    // relu([3+8+0.5, -3-1]) = [11.5, 0]; 11.5 + 0 + 2
    CHECK(out(0, 0) == 13.5);
    CHECK(p.input_dim() == 2);
    CHECK(p.output_dim() == 1);
}

TEST_CASE("backpropagated parameter gradients match central differences") {
    Rng rng(77);
    EncoderParams p = init_encoder(4, 5, 3, 123);
    const Matrix inputs = random_matrix(rng, 4, 3);
    const Matrix direction = random_matrix(rng, 3, 3);  // fixed linear functional

    ForwardCache cache;
    const Matrix out = encode_forward(p, inputs, &cache);
    // keep the probe away from relu kinks so central differences stay clean
    for (double v : cache.pre[0].data) REQUIRE(std::abs(v) > 1e-3);

    const EncoderGrads grads = encode_backward(p, cache, direction);

    auto f = [&](const Vector& flat) {
        EncoderParams q = p;
        unpack_params(q, flat);
        const Matrix o = encode_forward(q, inputs);
        double acc = 0.0;
        for (std::size_t i = 0; i < o.data.size(); ++i) acc += direction.data[i] * o.data[i];
        return acc;
    };
    const Vector fd = finite_diff_grad(f, pack_params(p), 1e-5);

    Vector analytic;
    for (const LayerTensors& g : grads) {
        analytic.insert(analytic.end(), g.weight.data.begin(), g.weight.data.end());
        analytic.insert(analytic.end(), g.bias.begin(), g.bias.end());
    }
    REQUIRE(analytic.size() == fd.size());
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const double rel = std::abs(analytic[i] - fd[i]) /
                           std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-6});
        CHECK(rel <= 1e-4);
    }
    (void)out;
}

TEST_CASE("relu blocks gradient flow through inactive units") {
    EncoderParams p;
    Layer l0;
    l0.weight = Matrix(1, 1);
    l0.weight.data = {1.0};
    l0.bias = {0.0};
    l0.relu = true;
    p.layers = {l0};
    Matrix in(1, 1);
    in(0, 0) = -2.0;  // pre-activation negative, output clamped to 0
    ForwardCache cache;
    const Matrix out = encode_forward(p, in, &cache);
    CHECK(out(0, 0) == 0.0);
    Matrix g(1, 1);
    g(0, 0) = 5.0;
    const EncoderGrads grads = encode_backward(p, cache, g);
    CHECK(grads[0].weight(0, 0) == 0.0);
    CHECK(grads[0].bias[0] == 0.0);
}

TEST_CASE("vanilla sgd applies the textbook update") {
    EncoderParams p;
    Layer l;
    l.weight = Matrix(1, 1);
    l.weight.data = {1.0};
    l.bias = {0.0};
    p.layers = {l};
    Matrix protos(1, 1);
    protos(0, 0) = 1.0;

    EncoderGrads grads(1);
    grads[0].weight = Matrix(1, 1);
    grads[0].weight.data = {2.0};
    grads[0].bias = {0.0};
    Matrix pg(1, 1);

    SgdState state;
    SgdHyper hp;
    hp.learning_rate = 0.1;
    hp.momentum = 0.0;
    hp.weight_decay = 0.0;
    sgd_step(p, protos, grads, pg, state, hp);
    CHECK(p.layers[0].weight(0, 0) == 0.8);
    CHECK(protos(0, 0) == 1.0);
}

TEST_CASE("momentum accumulates across steps") {
    EncoderParams p;
    Layer l;
    l.weight = Matrix(1, 1);
    l.weight.data = {10.0};
    l.bias = {0.0};
    p.layers = {l};
    Matrix protos(1, 1);
    protos(0, 0) = 1.0;
    EncoderGrads grads(1);
    grads[0].weight = Matrix(1, 1);
    grads[0].weight.data = {1.0};
    grads[0].bias = {0.0};
    Matrix pg(1, 1);
    SgdState state;
    SgdHyper hp;
    hp.learning_rate = 1.0;
    hp.momentum = 0.9;
    hp.weight_decay = 0.0;
    sgd_step(p, protos, grads, pg, state, hp);
    CHECK(p.layers[0].weight(0, 0) == 9.0);  // v = 1
    sgd_step(p, protos, grads, pg, state, hp);
    CHECK(p.layers[0].weight(0, 0) == doctest::Approx(9.0 - 1.9).epsilon(1e-15));
}

TEST_CASE("weight decay touches weights and prototypes but never biases") {
    EncoderParams p;
    Layer l;
    l.weight = Matrix(1, 1);
    l.weight.data = {4.0};
    l.bias = {3.0};
    p.layers = {l};
    Matrix protos(1, 1);
    protos(0, 0) = 2.0;
    EncoderGrads grads(1);
    grads[0].weight = Matrix(1, 1);
    grads[0].bias = {0.0};
    Matrix pg(1, 1);
    SgdState state;
    SgdHyper hp;
    hp.learning_rate = 1.0;
    hp.momentum = 0.0;
    hp.weight_decay = 0.5;
    sgd_step(p, protos, grads, pg, state, hp);
    CHECK(p.layers[0].weight(0, 0) == 2.0);  // 4 - 1*0.5*4
    CHECK(p.layers[0].bias[0] == 3.0);
    CHECK(protos(0, 0) == 1.0);
}

TEST_CASE("sgd rejects non-finite gradients by name") {
    EncoderParams p = init_encoder(2, 3, 2, 1);
    Matrix protos = init_prototypes(2, 4, {0, 1}, 1).w;
    EncoderGrads grads;
    for (const Layer& l : p.layers) {
        LayerTensors g;
        g.weight = Matrix(l.weight.rows, l.weight.cols);
        g.bias = Vector(l.bias.size(), 0.0);
        grads.push_back(std::move(g));
    }
    Matrix pg(2, 4);
    grads[1].weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
    SgdState state;
    const std::string msg = thrown_message([&] {
        sgd_step(p, protos, grads, pg, state, SgdHyper{});
    });
    CHECK(msg.find("non-finite gradient in layer 1") != std::string::npos);
}

TEST_CASE("the decay schedule reduces the rate from each decay epoch onward") {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.decay_epochs = {17, 25};
    cfg.decay_factor = 0.1;
    CHECK(learning_rate_at(cfg, 1) == 0.1);
    CHECK(learning_rate_at(cfg, 16) == 0.1);
    CHECK(learning_rate_at(cfg, 17) == 0.1 * 0.1);
    CHECK(learning_rate_at(cfg, 24) == 0.1 * 0.1);
    CHECK(learning_rate_at(cfg, 25) == 0.1 * 0.1 * 0.1);
    CHECK(learning_rate_at(cfg, 30) == 0.1 * 0.1 * 0.1);
    CHECK_THROWS_AS(learning_rate_at(cfg, 0), std::invalid_argument);
}

TEST_CASE("initialization is deterministic and well shaped") {
    const EncoderParams a = init_encoder(8, 16, 4, 5);
    const EncoderParams b = init_encoder(8, 16, 4, 5);
    CHECK(same_params(a, b));
    REQUIRE(a.layers.size() == 2);
    CHECK(a.layers[0].weight.rows == 16);
    CHECK(a.layers[0].weight.cols == 8);
    CHECK(a.layers[0].relu);
    CHECK(a.layers[1].weight.rows == 4);
    CHECK(a.layers[1].weight.cols == 16);
    CHECK_FALSE(a.layers[1].relu);
    for (double v : a.layers[0].bias) CHECK(v == 0.0);
    CHECK_FALSE(same_params(a, init_encoder(8, 16, 4, 6)));

    const PrototypeHead head = init_prototypes(4, 7, {5, 2}, 5);
    CHECK(head.w.rows == 4);
    CHECK(head.w.cols == 7);
    CHECK(head.child_ids == std::vector<int>{2, 5});
    for (std::size_t j = 0; j < 7; ++j)
        CHECK(std::abs(col_norm(head.w, j) - 1.0) < 1e-12);
    CHECK_THROWS_AS(init_prototypes(4, 3, {3}, 1), std::invalid_argument);
    CHECK_THROWS_AS(init_prototypes(4, 3, {1, 1}, 1), std::invalid_argument);
}

TEST_CASE("training produces a complete, finite ledger") {
    const Dataset ds = small_dataset();
    TrainConfig cfg = small_train_config();
    std::size_t callbacks = 0;
    cfg.epoch_callback = [&](const EpochRecord& r) {
        CHECK(r.epoch == callbacks + 1);
        ++callbacks;
    };
    const TrainResult t = train(ds, cfg);
    CHECK(callbacks == 3);
    REQUIRE(t.ledger.epochs.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        const EpochRecord& r = t.ledger.epochs[e];
        CHECK(r.epoch == e + 1);
        CHECK(std::isfinite(r.margin_loss));
        CHECK(std::isfinite(r.ip_loss));
        CHECK(r.ip_loss >= 0.0);
        CHECK(std::isfinite(r.total_loss));
        CHECK(r.learning_rate == learning_rate_at(cfg, e + 1));
        CHECK(r.child_offdiag_mean_abs.has_value());
    }
    CHECK(t.ledger.final_child_offdiag_mean_abs.has_value());
    CHECK(t.head.w.cols == ds.n_identities);
    CHECK(t.encoder.output_dim() == cfg.embed_dim);
    // prototypes must not collapse
    for (std::size_t j = 0; j < t.head.w.cols; ++j) CHECK(col_norm(t.head.w, j) > 1e-6);
}

TEST_CASE("the reported child similarity equals an independent recomputation") {
    const Dataset ds = small_dataset();
    const TrainConfig cfg = small_train_config();
    const TrainResult t = train(ds, cfg);
    const std::vector<int> child_ids = child_class_index(ds);
    REQUIRE(child_ids.size() >= 2);

    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t a = 0; a < child_ids.size(); ++a)
        for (std::size_t b = 0; b < child_ids.size(); ++b) {
            if (a == b) continue;
            const std::size_t i = static_cast<std::size_t>(child_ids[a]);
            const std::size_t j = static_cast<std::size_t>(child_ids[b]);
            const double c = col_dot(t.head.w, i, t.head.w, j) /
                             (col_norm(t.head.w, i) * col_norm(t.head.w, j));
            acc += std::abs(c);
            ++count;
        }
    const double oracle = acc / static_cast<double>(count);
    REQUIRE(t.ledger.final_child_offdiag_mean_abs.has_value());
    CHECK(std::abs(*t.ledger.final_child_offdiag_mean_abs - oracle) < 1e-10);
    CHECK(*t.ledger.epochs.back().child_offdiag_mean_abs ==
          *t.ledger.final_child_offdiag_mean_abs);
}

TEST_CASE("a zero learning rate leaves the initialization untouched") {
    const Dataset ds = small_dataset();
    TrainConfig cfg = small_train_config();
    cfg.epochs = 1;
    cfg.learning_rate = 0.0;
    const TrainResult t = train(ds, cfg);
    REQUIRE(t.ledger.epochs.size() == 1);
    CHECK(same_params(t.encoder, init_encoder(ds.feature_dim, cfg.hidden_dim, cfg.embed_dim,
                                              cfg.seed)));
    const PrototypeHead fresh =
        init_prototypes(cfg.embed_dim, ds.n_identities, child_class_index(ds), cfg.seed);
    CHECK(t.head.w == fresh.w);
}

TEST_CASE("training twice with one seed is bit-identical") {
    const Dataset ds = small_dataset();
    const TrainConfig cfg = small_train_config();
    const TrainResult a = train(ds, cfg);
    const TrainResult b = train(ds, cfg);
    CHECK(same_params(a.encoder, b.encoder));
    CHECK(a.head.w == b.head.w);
    REQUIRE(a.ledger.epochs.size() == b.ledger.epochs.size());
    for (std::size_t e = 0; e < a.ledger.epochs.size(); ++e) {
        CHECK(a.ledger.epochs[e].margin_loss == b.ledger.epochs[e].margin_loss);
        CHECK(a.ledger.epochs[e].ip_loss == b.ledger.epochs[e].ip_loss);
        CHECK(a.ledger.epochs[e].total_loss == b.ledger.epochs[e].total_loss);
        CHECK(*a.ledger.epochs[e].child_offdiag_mean_abs ==
              *b.ledger.epochs[e].child_offdiag_mean_abs);
    }
    TrainConfig other = cfg;
    other.seed = 99;
    const TrainResult c = train(ds, other);
    CHECK_FALSE(same_params(a.encoder, c.encoder));
}

TEST_CASE("incomplete trailing batches are dropped and recorded") {
    const Dataset ds = small_dataset();  // 6*4 + 2*3 = 30 samples
    TrainConfig cfg = small_train_config();
    cfg.batch_size = 7;  // 4 batches of 7, 2 dropped
    const TrainResult t = train(ds, cfg);
    bool noted = false;
    for (const std::string& n : t.ledger.notes)
        if (n.find("2 trailing samples dropped") != std::string::npos) noted = true;
    CHECK(noted);
}

TEST_CASE("train validates configuration and data") {
    const Dataset ds = small_dataset();
    TrainConfig cfg = small_train_config();
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(ds, cfg), std::invalid_argument);
    cfg = small_train_config();
    cfg.decay_epochs = {5, 5};
    CHECK_THROWS_AS(train(ds, cfg), std::invalid_argument);
    cfg = small_train_config();
    cfg.decay_epochs = {0};
    CHECK_THROWS_AS(train(ds, cfg), std::invalid_argument);
    cfg = small_train_config();
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(train(ds, cfg), std::invalid_argument);
    CHECK_THROWS_AS(train(Dataset{}, small_train_config()), std::invalid_argument);
}

TEST_CASE("an exploding run fails loudly instead of emitting garbage") {
    const Dataset ds = small_dataset();
    TrainConfig cfg = small_train_config();
    cfg.learning_rate = 1e280;
    cfg.epochs = 3;
    const std::string msg = thrown_message([&] { train(ds, cfg); });
    const bool informative = msg.find("non-finite") != std::string::npos ||
                             msg.find("prototype") != std::string::npos;
    CHECK(informative);
    CHECK_FALSE(msg.empty());
}

TEST_CASE("checkpoints round-trip bit for bit") {
    const Dataset ds = small_dataset();
    const TrainConfig cfg = small_train_config();
    const TrainResult t = train(ds, cfg);
    const auto path = std::filesystem::temp_directory_path() / "ipl_test_ckpt.bin";
    save_checkpoint(path, t.encoder, t.head, "0123456789abcdef");
    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.config_digest == "0123456789abcdef");
    CHECK(same_params(ck.encoder, t.encoder));
    CHECK(ck.head.w == t.head.w);
    CHECK(ck.head.child_ids == t.head.child_ids);

    // identical state, identical bytes
    const auto path2 = std::filesystem::temp_directory_path() / "ipl_test_ckpt2.bin";
    save_checkpoint(path2, t.encoder, t.head, "0123456789abcdef");
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::ostringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    std::filesystem::remove(path2);

    SUBCASE("truncation is detected") {
        std::ostringstream keep;
        std::ifstream in(path, std::ios::binary);
        keep << in.rdbuf();
        const std::string full = keep.str();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(full.data(), static_cast<std::streamsize>(full.size() / 2));
        out.close();
        CHECK(thrown_message([&] { load_checkpoint(path); }).find("truncated") !=
              std::string::npos);
    }
    SUBCASE("foreign files are rejected") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "definitely not a checkpoint, padded well past the magic";
        out.close();
        CHECK(thrown_message([&] { load_checkpoint(path); }).find("not a checkpoint") !=
              std::string::npos);
    }
    SUBCASE("trailing bytes are rejected") {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out << "x";
        out.close();
        CHECK(thrown_message([&] { load_checkpoint(path); }).find("trailing bytes") !=
              std::string::npos);
    }
    std::filesystem::remove(path);
}
