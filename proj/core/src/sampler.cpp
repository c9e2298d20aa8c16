#include "slide/sampler.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace slide {

std::string_view to_string(SamplingStrategy strategy) noexcept {
    switch (strategy) {
        case SamplingStrategy::Vanilla: return "vanilla";
        case SamplingStrategy::TopK: return "topk";
        case SamplingStrategy::HardThreshold: return "threshold";
    }
    return "unknown";
}

SamplingStrategy parse_sampling_strategy(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    std::erase_if(lower, [](char ch) { return ch == '_' || ch == '-'; });
    if (lower == "vanilla") return SamplingStrategy::Vanilla;
    if (lower == "topk") return SamplingStrategy::TopK;
    if (lower == "threshold" || lower == "hardthreshold") return SamplingStrategy::HardThreshold;
    throw ConfigError("unknown sampling strategy '" + std::string(name) + "'");
}

void validate(const SamplerConfig& c, std::uint32_t num_tables) {
    if (c.beta == 0) throw ConfigError("sampler: beta must be >= 1");
    if (c.min_freq == 0 || c.min_freq > num_tables) {
        throw ConfigError("sampler: min_freq must lie in [1, L]");
    }
}

std::uint32_t SamplerScratch::bump(NeuronId id) {
    if (counts_[id]++ == 0) touched_.push_back(id);
    return counts_[id];
}

void SamplerScratch::reset() noexcept {
    for (NeuronId id : touched_) counts_[id] = 0;
    touched_.clear();
}

namespace {

void collect_frequencies(const SamplerScratch& scratch, SampleReport& out) {
    out.frequencies.reserve(scratch.touched().size());
    for (NeuronId id : scratch.touched()) out.frequencies.emplace_back(id, scratch.count(id));
}

void count_all(const RawCandidates& raw, SamplerScratch& scratch) {
    for (const auto& bucket : raw) {
        for (NeuronId id : bucket) scratch.bump(id);
    }
}

}  // namespace

void vanilla_sample(const RawCandidates& raw, const SamplerConfig& cfg, Rng& rng,
                    SamplerScratch& scratch, SampleReport& out) {
    out.clear();
    scratch.reset();
    const auto l = static_cast<std::uint32_t>(raw.size());
    thread_local std::vector<std::uint32_t> order;
    order.resize(l);
    std::iota(order.begin(), order.end(), 0u);
    // Lazy Fisher-Yates: only the probed prefix is ever shuffled.
    for (std::uint32_t i = 0; i < l; ++i) {
        std::swap(order[i], order[std::uniform_int_distribution<std::uint32_t>(i, l - 1)(rng)]);
        for (NeuronId id : raw[order[i]]) scratch.bump(id);
        ++out.tables_probed;
        if (scratch.touched().size() >= cfg.beta) break;
    }
    out.active_ids.assign(scratch.touched().begin(), scratch.touched().end());
    collect_frequencies(scratch, out);
    scratch.reset();
}

void topk_sample(const RawCandidates& raw, const SamplerConfig& cfg, SamplerScratch& scratch,
                 SampleReport& out) {
    out.clear();
    scratch.reset();
    count_all(raw, scratch);
    out.tables_probed = static_cast<std::uint32_t>(raw.size());
    collect_frequencies(scratch, out);
    thread_local std::vector<std::pair<NeuronId, std::uint32_t>> ranked;
    ranked.assign(out.frequencies.begin(), out.frequencies.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    const std::size_t keep = std::min<std::size_t>(cfg.beta, ranked.size());
    out.active_ids.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.active_ids.push_back(ranked[i].first);
    scratch.reset();
}

void hard_threshold_sample(const RawCandidates& raw, const SamplerConfig& cfg, SamplerScratch& scratch,
                           SampleReport& out) {
    out.clear();
    scratch.reset();
    count_all(raw, scratch);
    out.tables_probed = static_cast<std::uint32_t>(raw.size());
    collect_frequencies(scratch, out);
    for (NeuronId id : scratch.touched()) {
        if (scratch.count(id) >= cfg.min_freq) out.active_ids.push_back(id);
    }
    scratch.reset();
}

void sample(const RawCandidates& raw, const SamplerConfig& cfg, Rng& rng, SamplerScratch& scratch,
            SampleReport& out) {
    switch (cfg.strategy) {
        case SamplingStrategy::Vanilla: vanilla_sample(raw, cfg, rng, scratch, out); return;
        case SamplingStrategy::TopK: topk_sample(raw, cfg, scratch, out); return;
        case SamplingStrategy::HardThreshold: hard_threshold_sample(raw, cfg, scratch, out); return;
    }
}

SampleReport vanilla_sample(const RawCandidates& raw, const SamplerConfig& cfg, Rng& rng,
                            std::uint32_t layer_width) {
    SamplerScratch scratch(layer_width);
    SampleReport out;
    vanilla_sample(raw, cfg, rng, scratch, out);
    return out;
}

SampleReport topk_sample(const RawCandidates& raw, const SamplerConfig& cfg, std::uint32_t layer_width) {
    SamplerScratch scratch(layer_width);
    SampleReport out;
    topk_sample(raw, cfg, scratch, out);
    return out;
}

SampleReport hard_threshold_sample(const RawCandidates& raw, const SamplerConfig& cfg,
                                   std::uint32_t layer_width) {
    SamplerScratch scratch(layer_width);
    SampleReport out;
    hard_threshold_sample(raw, cfg, scratch, out);
    return out;
}

double retrieval_probability(SamplingStrategy strategy, double p, std::uint32_t k, std::uint32_t l,
                             std::uint32_t tau_or_m) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("collision probability must lie in [0, 1]");
    if (k == 0 || l == 0) throw std::invalid_argument("K and L must be >= 1");
    if (tau_or_m > l) throw std::invalid_argument("tau / m must not exceed L");
    const double q = std::pow(p, static_cast<double>(k));
    switch (strategy) {
        case SamplingStrategy::Vanilla:
            return std::pow(q, static_cast<double>(tau_or_m)) * std::pow(1.0 - q, static_cast<double>(l - tau_or_m));
        case SamplingStrategy::HardThreshold: {
            double total = 0.0;
            double binom = 1.0;  // C(l, i), updated incrementally
            for (std::uint32_t i = 0; i <= l; ++i) {
                if (i > 0) binom = binom * (l - i + 1) / i;
                if (i >= tau_or_m) {
                    total += binom * std::pow(q, static_cast<double>(i)) * std::pow(1.0 - q, static_cast<double>(l - i));
                }
            }
            return std::min(total, 1.0);
        }
        case SamplingStrategy::TopK:
            break;
    }
    throw std::invalid_argument("TopK sampling has no closed-form retrieval probability");
}

double simhash_collision_probability(double cosine) {
    return 1.0 - std::acos(std::clamp(cosine, -1.0, 1.0)) / std::numbers::pi;
}

}  // namespace slide
