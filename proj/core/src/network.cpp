#include "slide/network.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

namespace slide {

std::string_view to_string(NeuronSelection selection) noexcept {
    switch (selection) {
        case NeuronSelection::Dense: return "dense";
        case NeuronSelection::Lsh: return "lsh";
        case NeuronSelection::Uniform: return "uniform";
    }
    return "unknown";
}

NeuronSelection parse_neuron_selection(std::string_view name) {
    if (name == "dense") return NeuronSelection::Dense;
    if (name == "lsh") return NeuronSelection::Lsh;
    if (name == "uniform") return NeuronSelection::Uniform;
    throw ConfigError("unknown neuron selection '" + std::string(name) + "'");
}

void validate(const TrainConfig& c) {
    if (c.batch_size == 0) throw ConfigError("train: batch size must be >= 1");
    if (!(c.learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
    if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0)) throw ConfigError("train: adam beta1 must lie in [0, 1)");
    if (!(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) throw ConfigError("train: adam beta2 must lie in [0, 1)");
    if (!(c.adam_eps > 0.0)) throw ConfigError("train: adam eps must be > 0");
    if (c.workers < 1) throw ConfigError("train: workers must be >= 1");
    if (c.n0 == 0) throw ConfigError("train: N0 must be >= 1");
    if (!(c.lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
}

namespace {

// Unsynchronized read-modify-write: concurrent adds may be lost but the
// access itself is well-defined.
inline void hogwild_add(Real& target, Real delta) noexcept {
    std::atomic_ref<Real> ref(target);
    ref.store(ref.load(std::memory_order_relaxed) + delta, std::memory_order_relaxed);
}

inline void relaxed_set(std::uint8_t& flag) noexcept {
    std::atomic_ref<std::uint8_t>(flag).store(1, std::memory_order_relaxed);
}

}  // namespace

// Layer --------------------------------------------------------------------

Layer::Layer(const LayerConfig& config, std::uint32_t in_dim, std::uint32_t batch_slots, std::uint64_t seed)
    : width_(config.width),
      in_dim_(in_dim),
      slots_(batch_slots),
      kind_(config.activation),
      selection_(config.selection),
      sampler_(config.lsh.sampler),
      uniform_count_(config.uniform_count) {
    if (width_ == 0) throw ConfigError("layer: width must be >= 1");
    const std::size_t n = std::size_t{width_} * in_dim_;
    weights_.resize(n);
    const Real bound = 1.0 / std::sqrt(static_cast<Real>(in_dim_));
    Rng rng(mix_seed(seed, 0));
    std::uniform_real_distribution<Real> init(-bound, bound);
    for (Real& w : weights_) w = init(rng);
    bias_.assign(width_, Real{0});
    m_w_.assign(n, Real{0});
    v_w_.assign(n, Real{0});
    m_b_.assign(width_, Real{0});
    v_b_.assign(width_, Real{0});
    steps_.assign(width_, 0);
    grad_w_.assign(n, Real{0});
    grad_b_.assign(width_, Real{0});
    touched_.assign(width_, 0);
    active_.assign(std::size_t{width_} * slots_, 0);
    activation_.assign(std::size_t{width_} * slots_, Real{0});
    error_.assign(std::size_t{width_} * slots_, Real{0});

    if (selection_ == NeuronSelection::Lsh) {
        HashFamilyConfig hash = config.lsh.hash;
        if (hash.dim == 0) hash.dim = in_dim_;
        if (hash.dim != in_dim_) throw ConfigError("layer: hash family dim must equal the layer input width");
        hash.seed = mix_seed(seed, 1);
        TableConfig tables = config.lsh.tables;
        tables.seed = mix_seed(seed, 2);
        validate(sampler_, hash.num_tables);
        tables_ = std::make_unique<LshTables>(hash, tables);
        tables_->build(weight_rows());
    } else if (selection_ == NeuronSelection::Uniform) {
        if (uniform_count_ == 0 || uniform_count_ > width_) {
            throw ConfigError("layer: uniform sample count must lie in [1, width]");
        }
    }
}

void Layer::apply_update(NeuronId a, std::span<const std::pair<std::uint32_t, Real>> grad, Real bias_grad,
                         const AdamConfig& adam) {
    if (a >= width_) throw std::out_of_range("neuron " + std::to_string(a) + " out of range");
    for (const auto& [i, g] : grad) {
        if (i >= in_dim_) throw std::out_of_range("gradient index " + std::to_string(i) + " out of range");
    }
    const std::uint64_t t = ++steps_[a];
    const Real correction1 = 1.0 - std::pow(adam.beta1, static_cast<Real>(t));
    const Real correction2 = 1.0 - std::pow(adam.beta2, static_cast<Real>(t));
    const auto step = [&](Real& w, Real& m, Real& v, Real g) {
        m = adam.beta1 * m + (1.0 - adam.beta1) * g;
        v = adam.beta2 * v + (1.0 - adam.beta2) * g * g;
        w -= adam.learning_rate * (m / correction1) / (std::sqrt(v / correction2) + adam.eps);
    };
    const std::size_t base = std::size_t{a} * in_dim_;
    for (const auto& [i, g] : grad) step(weights_[base + i], m_w_[base + i], v_w_[base + i], g);
    step(bias_[a], m_b_[a], v_b_[a], bias_grad);
}

// Network ------------------------------------------------------------------

Network::Network(const NetworkConfig& config) : config_(config) {
    if (config_.input_dim == 0) throw ConfigError("network: input dim must be >= 1");
    if (config_.layers.empty()) throw ConfigError("network: at least one layer is required");
    if (config_.batch_slots == 0) throw ConfigError("network: batch slots must be >= 1");
    for (std::size_t l = 0; l < config_.layers.size(); ++l) {
        const bool last = l + 1 == config_.layers.size();
        const Activation expected = last ? Activation::Softmax : Activation::ReLU;
        if (config_.layers[l].activation != expected) {
            throw ConfigError("network: hidden layers use ReLU and the final layer uses Softmax");
        }
    }
    layers_.reserve(config_.layers.size());
    std::uint32_t in_dim = config_.input_dim;
    for (std::size_t l = 0; l < config_.layers.size(); ++l) {
        layers_.emplace_back(config_.layers[l], in_dim, config_.batch_slots, mix_seed(config_.seed, 100 + l));
        in_dim = config_.layers[l].width;
    }
    slots_.resize(config_.batch_slots);
    for (std::uint32_t s = 0; s < config_.batch_slots; ++s) {
        SlotState& st = slots_[s];
        st.rng.seed(mix_seed(config_.seed, 1'000'000 + s));
        st.inputs.resize(layers_.size());
        st.trace.slot = s;
        st.trace.active.resize(layers_.size());
        st.scratch.resize(layers_.size());
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            st.inputs[l].set_dim(layers_[l].in_dim());
            if (layers_[l].selection() == NeuronSelection::Lsh) st.scratch[l].resize(layers_[l].width());
        }
    }
}

void Network::check_slot(std::uint32_t slot) const {
    if (slot >= slots_.size()) {
        throw std::out_of_range("slot " + std::to_string(slot) + " out of range for batch size " +
                                std::to_string(slots_.size()));
    }
}

void Network::add_uniform(Layer& layer, std::uint32_t slot, std::uint32_t count, Rng& rng,
                          std::vector<NeuronId>& out) {
    // Floyd's sampling; the slot's active flags double as the membership set.
    const std::uint32_t width = layer.width();
    count = std::min(count, width);
    for (std::uint32_t j = width - count; j < width; ++j) {
        NeuronId pick = std::uniform_int_distribution<std::uint32_t>(0, j)(rng);
        if (layer.active_[layer.at(pick, slot)]) pick = j;
        layer.active_[layer.at(pick, slot)] = 1;
        out.push_back(pick);
    }
}

void Network::select_active(std::uint32_t l, SlotState& st, std::span<const NeuronId> labels,
                            const ForwardOptions& options, std::vector<NeuronId>& out) {
    Layer& layer = layers_[l];
    const std::uint32_t slot = st.trace.slot;
    const auto mark = [&](NeuronId a) {
        std::uint8_t& flag = layer.active_[layer.at(a, slot)];
        if (!flag) {
            flag = 1;
            out.push_back(a);
        }
    };

    if (l < options.forced_active.size() && options.forced_active[l]) {
        for (NeuronId a : *options.forced_active[l]) {
            if (a >= layer.width()) throw std::out_of_range("forced neuron id out of range");
            mark(a);
        }
        return;
    }

    NeuronSelection selection = options.sample ? layer.selection() : NeuronSelection::Dense;
    if (selection == NeuronSelection::Uniform && labels.empty()) selection = NeuronSelection::Dense;
    switch (selection) {
        case NeuronSelection::Dense:
            out.resize(layer.width());
            std::iota(out.begin(), out.end(), NeuronId{0});
            for (NeuronId a = 0; a < layer.width(); ++a) layer.active_[layer.at(a, slot)] = 1;
            break;
        case NeuronSelection::Lsh:
            layer.tables_->query(st.inputs[l].view(), st.raw);
            sample(st.raw, layer.sampler_, st.rng, st.scratch[l], st.report);
            for (NeuronId a : st.report.active_ids) mark(a);
            if (out.empty()) add_uniform(layer, slot, layer.sampler_.beta, st.rng, out);
            break;
        case NeuronSelection::Uniform:
            add_uniform(layer, slot, layer.uniform_count(), st.rng, out);
            break;
    }

    const bool last = l + 1 == layers_.size();
    if (last && options.force_labels) {
        for (NeuronId y : labels) mark(y);
    }
}

void Network::clear_slot(std::uint32_t slot) {
    SlotState& st = slots_[slot];
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Layer& layer = layers_[l];
        for (NeuronId a : st.trace.active[l]) layer.active_[layer.at(a, slot)] = 0;
        st.trace.active[l].clear();
    }
    st.trace.output.clear();
    st.trace.loss = 0;
    st.trace.has_forward = false;
}

const ForwardTrace& Network::forward(SparseView input, std::uint32_t slot, std::span<const NeuronId> labels,
                                     const ForwardOptions& options) {
    check_slot(slot);
    if (input.dim != config_.input_dim) throw DimensionMismatch(config_.input_dim, input.dim);
    for (NeuronId y : labels) {
        if (y >= output_width()) throw std::out_of_range("label " + std::to_string(y) + " out of range");
    }
    SlotState& st = slots_[slot];
    if (st.trace.has_forward) clear_slot(slot);

    SparseVector& first = st.inputs[0];
    first.clear();
    first.set_dim(input.dim);
    first.reserve(input.nnz());
    for (std::size_t n = 0; n < input.nnz(); ++n) first.push_back(input.indices[n], input.values[n]);

    const std::uint32_t last = num_layers() - 1;
    for (std::uint32_t l = 0; l <= last; ++l) {
        Layer& layer = layers_[l];
        std::vector<NeuronId>& active = st.trace.active[l];
        active.clear();
        select_active(l, st, labels, options, active);
        std::sort(active.begin(), active.end());

        const SparseVector& x = st.inputs[l];
        const auto& xi = x.indices();
        const auto& xv = x.values();
        for (NeuronId a : active) {
            const auto row = layer.row(a);
            Real z = layer.bias_[a];
            for (std::size_t n = 0; n < xi.size(); ++n) z += xv[n] * row[xi[n]];
            if (observer_) observer_->on_row(l, a, xi, AccessKind::ForwardRead);
            const std::size_t k = layer.at(a, slot);
            layer.activation_[k] = (l == last || z > Real{0}) ? z : Real{0};
            layer.error_[k] = Real{0};
        }

        if (l < last) {
            SparseVector& next = st.inputs[l + 1];
            next.clear();
            next.set_dim(layer.width());
            for (NeuronId a : active) {
                const Real act = layer.activation_[layer.at(a, slot)];
                if (act > Real{0}) next.push_back(a, act);
            }
            continue;
        }

        // Softmax normalized over the active set only.
        st.trace.output.resize(active.size());
        Real max_z = -std::numeric_limits<Real>::infinity();
        for (NeuronId a : active) max_z = std::max(max_z, layer.activation_[layer.at(a, slot)]);
        Real total = 0;
        for (std::size_t j = 0; j < active.size(); ++j) {
            st.trace.output[j] = std::exp(layer.activation_[layer.at(active[j], slot)] - max_z);
            total += st.trace.output[j];
        }
        for (std::size_t j = 0; j < active.size(); ++j) {
            st.trace.output[j] /= total;
            layer.activation_[layer.at(active[j], slot)] = st.trace.output[j];
        }
    }

    st.trace.loss = 0;
    if (!labels.empty()) {
        const auto& out_active = st.trace.active[last];
        const Real share = Real{1} / static_cast<Real>(labels.size());
        for (NeuronId y : labels) {
            const auto it = std::lower_bound(out_active.begin(), out_active.end(), y);
            if (it != out_active.end() && *it == y) {
                st.trace.loss -= share * std::log(std::max(st.trace.output[it - out_active.begin()],
                                                           std::numeric_limits<Real>::min()));
            }
        }
    }
    st.trace.has_forward = true;
    return st.trace;
}

void Network::backward(std::uint32_t slot, std::span<const NeuronId> labels) {
    check_slot(slot);
    SlotState& st = slots_[slot];
    if (!st.trace.has_forward || st.trace.slot != slot) {
        throw std::logic_error("backward on slot " + std::to_string(slot) + " without a matching forward");
    }
    if (labels.empty()) return;

    const std::uint32_t last = num_layers() - 1;
    Layer& out_layer = layers_[last];
    const auto& out_active = st.trace.active[last];
    const Real share = Real{1} / static_cast<Real>(labels.size());
    for (std::size_t j = 0; j < out_active.size(); ++j) {
        const NeuronId a = out_active[j];
        const bool is_label = std::find(labels.begin(), labels.end(), a) != labels.end();
        out_layer.error_[out_layer.at(a, slot)] = st.trace.output[j] - (is_label ? share : Real{0});
    }

    for (std::uint32_t l = last + 1; l-- > 0;) {
        Layer& layer = layers_[l];
        Layer* prev = l > 0 ? &layers_[l - 1] : nullptr;
        const SparseVector& x = st.inputs[l];
        const auto& xi = x.indices();
        const auto& xv = x.values();
        for (NeuronId a : st.trace.active[l]) {
            relaxed_set(layer.touched_[a]);
            const Real delta = layer.error_[layer.at(a, slot)];
            if (delta == Real{0}) continue;
            if (observer_) observer_->on_row(l, a, xi, AccessKind::BackwardRead);
            Real* grad_row = layer.grad_w_.data() + std::size_t{a} * layer.in_dim_;
            const auto row = layer.row(a);
            for (std::size_t n = 0; n < xi.size(); ++n) hogwild_add(grad_row[xi[n]], delta * xv[n]);
            hogwild_add(layer.grad_b_[a], delta);
            if (prev != nullptr) {
                // Only inputs with positive ReLU output appear in x, so the
                // ReLU derivative is 1 on every coordinate reached here.
                for (std::size_t n = 0; n < xi.size(); ++n) {
                    prev->error_[prev->at(xi[n], slot)] += delta * row[xi[n]];
                }
            }
        }
    }
}

void Network::apply_updates(const AdamConfig& adam, std::uint32_t batch_count, int threads) {
    const Real scale = Real{1} / static_cast<Real>(std::max<std::uint32_t>(batch_count, 1));
    const std::uint32_t num_slots = batch_slots();
    for (std::uint32_t l = 0; l < num_layers(); ++l) {
        Layer& layer = layers_[l];
        const std::int64_t width = layer.width();
        std::exception_ptr failure;
#pragma omp parallel for num_threads(threads) if (threads > 1) schedule(dynamic, 16)
        for (std::int64_t ai = 0; ai < width; ++ai) {
            const auto a = static_cast<NeuronId>(ai);
            if (!layer.touched_[a]) continue;
            thread_local std::vector<std::uint32_t> stamp;
            thread_local std::uint32_t epoch = 0;
            thread_local std::vector<std::uint32_t> coords;
            thread_local std::vector<std::pair<std::uint32_t, Real>> grad;
            if (stamp.size() < layer.in_dim()) stamp.resize(layer.in_dim(), 0);
            if (++epoch == 0) {
                std::fill(stamp.begin(), stamp.end(), 0);
                epoch = 1;
            }
            // Coordinates touched: union of the inputs of every slot in which
            // this neuron was active.
            coords.clear();
            for (std::uint32_t s = 0; s < num_slots; ++s) {
                std::uint8_t& flag = layer.active_[layer.at(a, s)];
                if (!flag) continue;
                flag = 0;
                for (std::uint32_t i : slots_[s].inputs[l].indices()) {
                    if (stamp[i] != epoch) {
                        stamp[i] = epoch;
                        coords.push_back(i);
                    }
                }
            }
            std::sort(coords.begin(), coords.end());
            Real* grad_row = layer.grad_w_.data() + std::size_t{a} * layer.in_dim_;
            grad.clear();
            for (std::uint32_t i : coords) {
                grad.emplace_back(i, grad_row[i] * scale);
                grad_row[i] = Real{0};
            }
            try {
                layer.apply_update(a, grad, layer.grad_b_[a] * scale, adam);
            } catch (...) {
#pragma omp critical(slide_update_failure)
                failure = std::current_exception();
            }
            layer.grad_b_[a] = Real{0};
            layer.touched_[a] = 0;
            if (layer.tables_) layer.tables_->mark_dirty(a);
            if (observer_) observer_->on_row(l, a, coords, AccessKind::Update);
        }
        if (failure) std::rethrow_exception(failure);
    }
    for (std::uint32_t s = 0; s < num_slots; ++s) clear_slot(s);
}

void Network::reset_batch() {
    for (Layer& layer : layers_) {
        for (NeuronId a = 0; a < layer.width(); ++a) {
            if (!layer.touched_[a]) continue;
            std::fill_n(layer.grad_w_.begin() + std::size_t{a} * layer.in_dim_, layer.in_dim_, Real{0});
            layer.grad_b_[a] = Real{0};
            layer.touched_[a] = 0;
        }
    }
    for (std::uint32_t s = 0; s < batch_slots(); ++s) clear_slot(s);
}

BatchStats Network::train_batch(std::span<const TrainingExample> batch, std::uint64_t iteration,
                                 const TrainConfig& cfg) {
    if (batch.empty()) throw std::invalid_argument("train_batch: empty batch");
    if (batch.size() > slots_.size()) {
        throw std::invalid_argument("train_batch: batch of " + std::to_string(batch.size()) +
                                    " exceeds the configured batch size " + std::to_string(slots_.size()));
    }
    for (const TrainingExample& ex : batch) {
        if (ex.features.dim != config_.input_dim) throw DimensionMismatch(config_.input_dim, ex.features.dim);
        for (NeuronId y : ex.labels) {
            if (y >= output_width()) throw std::out_of_range("label " + std::to_string(y) + " out of range");
        }
    }

    const auto n = static_cast<std::int64_t>(batch.size());
    std::vector<double> losses(batch.size(), 0.0);
    std::exception_ptr failure;
#pragma omp parallel for num_threads(cfg.workers) if (cfg.workers > 1) schedule(dynamic, 1)
    for (std::int64_t s = 0; s < n; ++s) {
        try {
            const auto slot = static_cast<std::uint32_t>(s);
            slots_[slot].rng.seed(mix_seed(config_.seed ^ (iteration * 0x100000001b3ULL), slot));
            const ForwardTrace& trace = forward(batch[slot].features, slot, batch[slot].labels);
            backward(slot, batch[slot].labels);
            losses[slot] = trace.loss;
        } catch (...) {
#pragma omp critical(slide_batch_failure)
            failure = std::current_exception();
        }
    }
    if (failure) {
        reset_batch();
        std::rethrow_exception(failure);
    }

    BatchStats stats;
    stats.active_fraction.assign(num_layers(), 0.0);
    std::size_t labelled = 0;
    for (std::int64_t s = 0; s < n; ++s) {
        const ForwardTrace& trace = slots_[s].trace;
        for (std::uint32_t l = 0; l < num_layers(); ++l) {
            stats.active_fraction[l] += static_cast<double>(trace.active[l].size()) / layers_[l].width();
        }
        if (!batch[s].labels.empty()) {
            stats.mean_loss += losses[s];
            ++labelled;
        }
    }
    for (double& f : stats.active_fraction) f /= static_cast<double>(n);
    if (labelled > 0) stats.mean_loss /= static_cast<double>(labelled);

    apply_updates(cfg.adam(), static_cast<std::uint32_t>(n), cfg.workers);
    for (Layer& layer : layers_) {
        if (layer.tables_ && layer.tables_->maybe_rebuild(iteration, layer.weight_rows(), cfg.workers)) {
            stats.rebuilt = true;
        }
    }
    return stats;
}

std::vector<NeuronId> Network::predict(SparseView input, std::uint32_t slot, bool dense) {
    ForwardOptions options;
    options.force_labels = false;
    options.sample = !dense;
    const ForwardTrace& trace = forward(input, slot, {}, options);
    const auto& active = trace.active.back();
    std::vector<std::size_t> order(active.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return trace.output[a] != trace.output[b] ? trace.output[a] > trace.output[b] : active[a] < active[b];
    });
    std::vector<NeuronId> ranked;
    ranked.reserve(order.size());
    for (std::size_t j : order) ranked.push_back(active[j]);
    clear_slot(slot);
    return ranked;
}

void Network::rebuild_all_tables(int threads) {
    for (Layer& layer : layers_) {
        if (layer.tables_) layer.tables_->build(layer.weight_rows(), threads);
    }
}

}  // namespace slide
