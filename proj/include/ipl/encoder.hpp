#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ipl/data.hpp"
#include "ipl/losses.hpp"
#include "ipl/matrix.hpp"

namespace ipl {

struct Layer {
    Matrix weight;  // out_dim x in_dim
    Vector bias;    // out_dim
    bool relu = false;
};

struct EncoderParams {
    std::vector<Layer> layers;
    std::size_t input_dim() const;
    std::size_t output_dim() const;
};

struct LayerTensors {
    Matrix weight;
    Vector bias;
};
using EncoderGrads = std::vector<LayerTensors>;

struct ForwardCache {
    Matrix input;
    std::vector<Matrix> pre;  // pre-activation per layer
    std::vector<Matrix> act;  // post-activation per layer; back() is the output
};

/// inputs: d_in x batch, one column per sample. Returns d_out x batch.
Matrix encode_forward(const EncoderParams& params, const Matrix& inputs,
                      ForwardCache* cache = nullptr);

/// grad_output must match the cached forward's output shape.
EncoderGrads encode_backward(const EncoderParams& params, const ForwardCache& cache,
                             const Matrix& grad_output);

struct PrototypeHead {
    Matrix w;                    // embed_dim x n_identities, one column per identity
    std::vector<int> child_ids;  // ascending
};

struct SgdHyper {
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;  // applied to weights and prototypes, never biases
};

struct SgdState {
    std::vector<LayerTensors> velocity;
    Matrix proto_velocity;
};

/// v <- momentum*v + g + wd*p; p <- p - lr*v. Rejects non-finite gradients,
/// naming the offending tensor.
void sgd_step(EncoderParams& params, Matrix& prototypes, const EncoderGrads& grads,
              const Matrix& proto_grads, SgdState& state, const SgdHyper& hp);

enum class ApplyIpTo { off, child_only, all_identities };

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double margin_loss = 0.0;
    double ip_loss = 0.0;
    double total_loss = 0.0;
    double learning_rate = 0.0;
    /// Mean |cos| over distinct child prototype pairs at epoch end; absent
    /// when the dataset has fewer than 2 child-containing identities.
    std::optional<double> child_offdiag_mean_abs;
};

struct RunLedger {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::vector<std::string> notes;
    std::vector<EpochRecord> epochs;
    std::optional<double> final_child_offdiag_mean_abs;
};

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double learning_rate = 0.1;
    std::vector<std::size_t> decay_epochs = {17, 25};  // lr *= decay_factor from these epochs on
    double decay_factor = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t hidden_dim = 64;
    std::size_t embed_dim = 16;
    std::uint64_t seed = 1;
    MarginConfig margin;
    ApplyIpTo apply_ip_to = ApplyIpTo::child_only;
    /// Raises the margin of child-containing classes (per-class override).
    std::optional<double> child_margin_override;
    /// Child:adult batch ratio for the oversampling baseline; unset = plain shuffling.
    std::optional<double> sampler_rho;
    std::string run_id;
    std::string config_digest;
    /// Invoked after each epoch record is finalized; lets callers stream the
    /// ledger to disk while the run is still in flight.
    std::function<void(const EpochRecord&)> epoch_callback;
};

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch);

EncoderParams init_encoder(std::size_t input_dim, std::size_t hidden_dim, std::size_t embed_dim,
                           std::uint64_t seed);
PrototypeHead init_prototypes(std::size_t embed_dim, std::size_t n_identities,
                              const std::vector<int>& child_ids, std::uint64_t seed);

struct TrainResult {
    EncoderParams encoder;
    PrototypeHead head;
    RunLedger ledger;
};

TrainResult train(const Dataset& ds, const TrainConfig& cfg);

/// Versioned little-endian binary container; identical state writes the same bytes.
void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                     const PrototypeHead& head, const std::string& config_digest);

struct Checkpoint {
    EncoderParams encoder;
    PrototypeHead head;
    std::string config_digest;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ipl
