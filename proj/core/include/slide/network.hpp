#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "slide/lsh_tables.hpp"
#include "slide/sampler.hpp"
#include "slide/sparse_vector.hpp"
#include "slide/types.hpp"

namespace slide {

enum class Activation : std::uint8_t { ReLU = 0, Softmax = 1 };

// How a layer picks its active neurons during training.
enum class NeuronSelection {
    Dense,    // every neuron
    Lsh,      // hash-table retrieval + sampler
    Uniform,  // input-independent uniform sample (static sampled-softmax baseline)
};

std::string_view to_string(NeuronSelection selection) noexcept;
NeuronSelection parse_neuron_selection(std::string_view name);

struct LshLayerConfig {
    // `dim` may be left 0; it is filled with the layer's input width.
    HashFamilyConfig hash;
    TableConfig tables;
    SamplerConfig sampler;
};

struct LayerConfig {
    std::uint32_t width = 0;
    Activation activation = Activation::ReLU;
    NeuronSelection selection = NeuronSelection::Dense;
    LshLayerConfig lsh;
    // Neurons drawn per instance under NeuronSelection::Uniform.
    std::uint32_t uniform_count = 0;
};

struct NetworkConfig {
    std::uint32_t input_dim = 0;
    std::vector<LayerConfig> layers;
    // Number of per-neuron batch slots (the batch size B).
    std::uint32_t batch_slots = 128;
    std::uint64_t seed = 0;
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    std::uint32_t batch_size = 128;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint32_t n0 = 50;
    double lambda = 0.0;
    std::uint32_t epochs = 1;
    std::uint64_t seed = 0;
    int workers = 1;

    AdamConfig adam() const noexcept { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
};

void validate(const TrainConfig& config);

// One fully-connected layer. Weights are row-major (one row per neuron).
// Every neuron owns B-long arrays (active flag, activation, error) so batch
// slots never share mutable per-instance state.
class Layer {
public:
    Layer(const LayerConfig& config, std::uint32_t in_dim, std::uint32_t batch_slots, std::uint64_t seed);

    std::uint32_t width() const noexcept { return width_; }
    std::uint32_t in_dim() const noexcept { return in_dim_; }
    std::uint32_t batch_slots() const noexcept { return slots_; }
    Activation activation() const noexcept { return kind_; }
    NeuronSelection selection() const noexcept { return selection_; }
    const SamplerConfig& sampler_config() const noexcept { return sampler_; }
    std::uint32_t uniform_count() const noexcept { return uniform_count_; }

    std::span<Real> weights() noexcept { return weights_; }
    std::span<const Real> weights() const noexcept { return weights_; }
    std::span<Real> row(NeuronId a) noexcept { return std::span(weights_).subspan(std::size_t{a} * in_dim_, in_dim_); }
    std::span<const Real> row(NeuronId a) const noexcept {
        return std::span(weights_).subspan(std::size_t{a} * in_dim_, in_dim_);
    }
    std::span<Real> bias() noexcept { return bias_; }
    std::span<const Real> bias() const noexcept { return bias_; }
    WeightRows weight_rows() const noexcept { return {weights_, width_, in_dim_}; }

    // Adam state.
    std::span<Real> adam_m() noexcept { return m_w_; }
    std::span<Real> adam_v() noexcept { return v_w_; }
    std::span<Real> adam_m_bias() noexcept { return m_b_; }
    std::span<Real> adam_v_bias() noexcept { return v_b_; }
    std::span<std::uint64_t> adam_steps() noexcept { return steps_; }
    std::span<const Real> adam_m() const noexcept { return m_w_; }
    std::span<const Real> adam_v() const noexcept { return v_w_; }
    std::span<const Real> adam_m_bias() const noexcept { return m_b_; }
    std::span<const Real> adam_v_bias() const noexcept { return v_b_; }
    std::span<const std::uint64_t> adam_steps() const noexcept { return steps_; }

    // Batch gradient accumulators (sum over instances, not yet averaged).
    Real weight_gradient(NeuronId a, std::uint32_t i) const noexcept {
        return grad_w_[std::size_t{a} * in_dim_ + i];
    }
    Real bias_gradient(NeuronId a) const noexcept { return grad_b_[a]; }

    // Per-neuron batch arrays.
    bool active(NeuronId a, std::uint32_t slot) const noexcept { return active_[std::size_t{a} * slots_ + slot] != 0; }
    Real activation_value(NeuronId a, std::uint32_t slot) const noexcept {
        return activation_[std::size_t{a} * slots_ + slot];
    }
    Real error(NeuronId a, std::uint32_t slot) const noexcept { return error_[std::size_t{a} * slots_ + slot]; }

    LshTables* tables() noexcept { return tables_.get(); }
    const LshTables* tables() const noexcept { return tables_.get(); }

    // Sparse Adam step on the listed coordinates only; moments of other
    // coordinates are left untouched. The neuron's step counter advances
    // once per call. Throws std::out_of_range on a bad index.
    void apply_update(NeuronId a, std::span<const std::pair<std::uint32_t, Real>> grad, Real bias_grad,
                      const AdamConfig& adam);

private:
    friend class Network;

    std::size_t at(NeuronId a, std::uint32_t slot) const noexcept { return std::size_t{a} * slots_ + slot; }

    std::uint32_t width_;
    std::uint32_t in_dim_;
    std::uint32_t slots_;
    Activation kind_;
    NeuronSelection selection_;
    SamplerConfig sampler_;
    std::uint32_t uniform_count_;

    std::vector<Real> weights_, bias_;
    std::vector<Real> m_w_, v_w_, m_b_, v_b_;
    std::vector<std::uint64_t> steps_;
    std::vector<Real> grad_w_, grad_b_;
    std::vector<std::uint8_t> touched_;

    std::vector<std::uint8_t> active_;
    std::vector<Real> activation_;
    std::vector<Real> error_;

    std::unique_ptr<LshTables> tables_;
};

// Active ids per layer for one slot, plus the active-set softmax.
struct ForwardTrace {
    std::uint32_t slot = 0;
    // Sorted ascending.
    std::vector<std::vector<NeuronId>> active;
    // Softmax over active.back(), aligned with it.
    std::vector<Real> output;
    // Cross-entropy against the labels passed to backward().
    Real loss = 0;
    bool has_forward = false;
};

struct ForwardOptions {
    // Add the true labels to the output layer's active set.
    bool force_labels = true;
    // false: every layer computes all neurons (dense evaluation).
    bool sample = true;
    // Per-layer override of the active set (test hook); nullopt = normal.
    std::vector<std::optional<std::vector<NeuronId>>> forced_active;
};

enum class AccessKind { ForwardRead, BackwardRead, Update };

// Receives one call per weight row visited, with the input coordinates used.
class AccessObserver {
public:
    virtual ~AccessObserver() = default;
    virtual void on_row(std::uint32_t layer, NeuronId neuron, std::span<const std::uint32_t> inputs,
                        AccessKind kind) = 0;
};

struct TrainingExample {
    SparseView features;
    std::span<const NeuronId> labels;
};

struct BatchStats {
    double mean_loss = 0;
    // Mean |S_l| / width over the batch, per layer.
    std::vector<double> active_fraction;
    bool rebuilt = false;
};

class Network {
public:
    explicit Network(const NetworkConfig& config);

    const NetworkConfig& config() const noexcept { return config_; }
    std::uint32_t input_dim() const noexcept { return config_.input_dim; }
    std::uint32_t num_layers() const noexcept { return static_cast<std::uint32_t>(layers_.size()); }
    std::uint32_t batch_slots() const noexcept { return config_.batch_slots; }
    std::uint32_t output_width() const noexcept { return layers_.back().width(); }
    Layer& layer(std::uint32_t l) noexcept { return layers_[l]; }
    const Layer& layer(std::uint32_t l) const noexcept { return layers_[l]; }

    // Sparse forward pass in `slot`. With labels and force_labels, the true
    // labels join the output layer's active set.
    const ForwardTrace& forward(SparseView input, std::uint32_t slot, std::span<const NeuronId> labels = {},
                                const ForwardOptions& options = {});

    // Error propagation over (active, active) weight pairs for a slot that
    // ran forward(); accumulates into the batch gradient buffers.
    void backward(std::uint32_t slot, std::span<const NeuronId> labels);

    // Adam step for every neuron touched in the batch (gradients averaged
    // over `batch_count` instances), then clears slot state.
    void apply_updates(const AdamConfig& adam, std::uint32_t batch_count, int threads = 1);
    // Drops per-slot state and gradient buffers without updating.
    void reset_batch();

    // One batch of HOGWILD training: instances run concurrently, one per
    // slot, accumulating gradients without locks; Adam and any due hash-table
    // rebuild happen at the batch barrier.
    BatchStats train_batch(std::span<const TrainingExample> batch, std::uint64_t iteration, const TrainConfig& cfg);

    // Active output ids ranked by score (descending, ties by id). Labels are
    // not force-included. `dense` evaluates every output neuron.
    std::vector<NeuronId> predict(SparseView input, std::uint32_t slot = 0, bool dense = false);

    const ForwardTrace& trace(std::uint32_t slot) const { return slots_.at(slot).trace; }
    const SparseVector& layer_input(std::uint32_t slot, std::uint32_t layer) const {
        return slots_.at(slot).inputs.at(layer);
    }

    void set_observer(AccessObserver* observer) noexcept { observer_ = observer; }

    // Re-hashes every LSH layer from scratch (e.g. after loading weights).
    void rebuild_all_tables(int threads = 1);

private:
    struct SlotState {
        Rng rng;
        std::vector<SparseVector> inputs;  // input to each layer
        ForwardTrace trace;
        std::vector<SamplerScratch> scratch;
        SampleReport report;
        RawCandidates raw;
    };

    void select_active(std::uint32_t l, SlotState& st, std::span<const NeuronId> labels,
                       const ForwardOptions& options, std::vector<NeuronId>& out);
    void add_uniform(Layer& layer, std::uint32_t slot, std::uint32_t count, Rng& rng, std::vector<NeuronId>& out);
    void clear_slot(std::uint32_t slot);
    void check_slot(std::uint32_t slot) const;

    NetworkConfig config_;
    std::vector<Layer> layers_;
    std::vector<SlotState> slots_;
    AccessObserver* observer_ = nullptr;
};

}  // namespace slide
