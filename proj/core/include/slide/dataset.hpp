#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "slide/sparse_vector.hpp"
#include "slide/types.hpp"

namespace slide {

struct Example {
    SparseVector features;
    // Sorted ascending, no duplicates.
    std::vector<NeuronId> labels;

    friend bool operator==(const Example&, const Example&) = default;
};

struct Dataset {
    std::vector<Example> examples;
    std::uint32_t num_features = 0;
    std::uint32_t num_labels = 0;

    std::size_t size() const noexcept { return examples.size(); }
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class DataErrorKind {
    Io,
    MissingHeader,
    NonNumeric,
    FeatureIndexOutOfRange,
    LabelOutOfRange,
    DuplicateFeature,
    CountMismatch,
};

std::string_view to_string(DataErrorKind kind) noexcept;

class DataError : public std::runtime_error {
public:
    DataError(DataErrorKind kind, std::size_t line, const std::string& message);

    DataErrorKind kind() const noexcept { return kind_; }
    // 1-based line number; 0 when the error is not tied to a line.
    std::size_t line() const noexcept { return line_; }

private:
    DataErrorKind kind_;
    std::size_t line_;
};

struct LoadOptions {
    // Scale every feature vector to unit L2 norm.
    bool normalize_l2 = false;
};

// Extreme-classification text format: a header "N d L", then N lines of
// "l1,l2,... i1:v1 i2:v2 ...". Labels may be absent (line starts with a
// feature or whitespace); features may be absent. CRLF is accepted. Zero
// feature values are dropped.
Dataset load_xc_file(const std::filesystem::path& path, const LoadOptions& options = {});
Dataset parse_xc(std::istream& in, const LoadOptions& options = {});

void write_xc(const Dataset& ds, std::ostream& out);
void write_xc_file(const Dataset& ds, const std::filesystem::path& path);

void l2_normalize(Dataset& ds);

// Seeded shuffle of [0, n) cut into consecutive batches of `batch_size`; the
// last batch may be short. Throws std::invalid_argument if batch_size == 0.
std::vector<std::vector<std::uint32_t>> make_batches(std::size_t n, std::uint32_t batch_size, std::uint64_t seed);
inline std::vector<std::vector<std::uint32_t>> batches(const Dataset& ds, std::uint32_t batch_size,
                                                       std::uint64_t seed) {
    return make_batches(ds.size(), batch_size, seed);
}

// |top-k(ranked) ∩ truth| / k. An empty ranking scores 0. Throws
// std::invalid_argument if k == 0.
double precision_at_k(std::span<const NeuronId> ranked, std::span<const NeuronId> truth, std::uint32_t k);

// Multi-label data where each label owns a sparse prototype; an example is
// the noisy union of partial prototypes of its labels. Train and test draws
// share the prototypes.
struct SyntheticConfig {
    std::uint32_t num_features = 1000;
    std::uint32_t num_labels = 2000;
    std::uint32_t train_examples = 5000;
    std::uint32_t test_examples = 1000;
    std::uint32_t min_labels = 1;
    std::uint32_t max_labels = 3;
    std::uint32_t prototype_size = 12;
    std::uint32_t kept_per_label = 8;
    std::uint32_t noise_features = 4;
    // Label popularity ~ 1 / rank^zipf (0 = uniform).
    double zipf = 0.0;
    // When nonzero, labels are split into this many topics. A topic's
    // prototypes draw from its own pool of cluster_features features, and the
    // labels of one example share a topic.
    std::uint32_t num_clusters = 0;
    std::uint32_t cluster_features = 0;
    std::uint64_t seed = 0;
};

struct SyntheticSplit {
    Dataset train;
    Dataset test;
};

SyntheticSplit make_synthetic(const SyntheticConfig& config);

}  // namespace slide
