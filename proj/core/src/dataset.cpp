#include "slide/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

namespace slide {

std::string_view to_string(DataErrorKind kind) noexcept {
    switch (kind) {
        case DataErrorKind::Io: return "io";
        case DataErrorKind::MissingHeader: return "missing header";
        case DataErrorKind::NonNumeric: return "non-numeric value";
        case DataErrorKind::FeatureIndexOutOfRange: return "feature index out of range";
        case DataErrorKind::LabelOutOfRange: return "label out of range";
        case DataErrorKind::DuplicateFeature: return "duplicate feature index";
        case DataErrorKind::CountMismatch: return "example count mismatch";
    }
    return "unknown";
}

namespace {

std::string describe(DataErrorKind kind, std::size_t line, const std::string& message) {
    std::string out(to_string(kind));
    if (line > 0) out += " at line " + std::to_string(line);
    return out + ": " + message;
}

bool is_space(char c) noexcept { return c == ' ' || c == '\t' || c == '\r'; }

template <typename T>
bool parse_number(std::string_view text, T& value) {
    if (text.empty()) return false;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) return false;
    if constexpr (std::is_floating_point_v<T>) return std::isfinite(value);
    return true;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        const std::size_t start = i;
        while (i < line.size() && !is_space(line[i])) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

Example parse_example(std::string_view line, std::size_t lineno, std::uint32_t d, std::uint32_t num_labels) {
    Example ex;
    const auto fields = split_fields(line);
    std::size_t first_feature = 0;
    const bool has_labels = !line.empty() && !is_space(line.front()) && !fields.empty() &&
                            fields.front().find(':') == std::string_view::npos;
    if (has_labels) {
        first_feature = 1;
        std::string_view rest = fields.front();
        while (true) {
            const std::size_t comma = rest.find(',');
            const std::string_view piece = rest.substr(0, comma);
            std::uint32_t label = 0;
            if (!parse_number(piece, label)) {
                throw DataError(DataErrorKind::NonNumeric, lineno, "bad label '" + std::string(piece) + "'");
            }
            if (label >= num_labels) {
                throw DataError(DataErrorKind::LabelOutOfRange, lineno,
                                "label " + std::to_string(label) + " >= " + std::to_string(num_labels));
            }
            ex.labels.push_back(label);
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        std::sort(ex.labels.begin(), ex.labels.end());
        ex.labels.erase(std::unique(ex.labels.begin(), ex.labels.end()), ex.labels.end());
    }

    std::vector<std::pair<std::uint32_t, Real>> entries;
    entries.reserve(fields.size() - first_feature);
    for (std::size_t f = first_feature; f < fields.size(); ++f) {
        const std::string_view field = fields[f];
        const std::size_t colon = field.find(':');
        std::uint32_t index = 0;
        Real value = 0;
        if (colon == std::string_view::npos || !parse_number(field.substr(0, colon), index) ||
            !parse_number(field.substr(colon + 1), value)) {
            throw DataError(DataErrorKind::NonNumeric, lineno, "bad feature '" + std::string(field) + "'");
        }
        if (index >= d) {
            throw DataError(DataErrorKind::FeatureIndexOutOfRange, lineno,
                            "feature " + std::to_string(index) + " >= " + std::to_string(d));
        }
        entries.emplace_back(index, value);
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < entries.size(); ++i) {
        if (entries[i].first == entries[i - 1].first) {
            throw DataError(DataErrorKind::DuplicateFeature, lineno,
                            "feature " + std::to_string(entries[i].first) + " appears twice");
        }
    }
    ex.features = SparseVector::from_pairs(d, std::move(entries));
    return ex;
}

bool is_blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(), is_space);
}

}  // namespace

DataError::DataError(DataErrorKind kind, std::size_t line, const std::string& message)
    : std::runtime_error(describe(kind, line, message)), kind_(kind), line_(line) {}

Dataset parse_xc(std::istream& in, const LoadOptions& options) {
    std::string line;
    if (!std::getline(in, line)) throw DataError(DataErrorKind::MissingHeader, 1, "empty input");
    const auto header = split_fields(line);
    std::uint32_t n = 0;
    Dataset ds;
    if (header.size() != 3 || !parse_number(header[0], n) || !parse_number(header[1], ds.num_features) ||
        !parse_number(header[2], ds.num_labels)) {
        throw DataError(DataErrorKind::MissingHeader, 1, "expected 'N d L', got '" + line + "'");
    }
    if (n == 0 || ds.num_features == 0 || ds.num_labels == 0) {
        throw DataError(DataErrorKind::MissingHeader, 1, "N, d and L must all be positive");
    }

    ds.examples.reserve(n);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (ds.examples.size() == n) {
            if (is_blank(line)) continue;
            throw DataError(DataErrorKind::CountMismatch, lineno,
                            "header declares " + std::to_string(n) + " examples but more follow");
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ds.examples.push_back(parse_example(line, lineno, ds.num_features, ds.num_labels));
    }
    if (in.bad()) throw DataError(DataErrorKind::Io, lineno, "read failed");
    if (ds.examples.size() != n) {
        throw DataError(DataErrorKind::CountMismatch, 0,
                        "header declares " + std::to_string(n) + " examples, found " +
                            std::to_string(ds.examples.size()));
    }
    if (options.normalize_l2) l2_normalize(ds);
    return ds;
}

Dataset load_xc_file(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(DataErrorKind::Io, 0, "cannot open " + path.string());
    return parse_xc(in, options);
}

void write_xc(const Dataset& ds, std::ostream& out) {
    out << ds.examples.size() << ' ' << ds.num_features << ' ' << ds.num_labels << '\n';
    std::array<char, 64> buf;
    for (const Example& ex : ds.examples) {
        for (std::size_t i = 0; i < ex.labels.size(); ++i) {
            if (i > 0) out << ',';
            out << ex.labels[i];
        }
        const auto& idx = ex.features.indices();
        const auto& val = ex.features.values();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), val[i]);
            out << ' ' << idx[i] << ':' << std::string_view(buf.data(), res.ptr - buf.data());
        }
        out << '\n';
    }
}

void write_xc_file(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(DataErrorKind::Io, 0, "cannot open " + path.string() + " for writing");
    write_xc(ds, out);
    out.flush();
    if (!out) throw DataError(DataErrorKind::Io, 0, "write failed for " + path.string());
}

void l2_normalize(Dataset& ds) {
    for (Example& ex : ds.examples) {
        const Real norm = std::sqrt(ex.features.squared_norm());
        if (norm > 0) ex.features.scale(1.0 / norm);
    }
}

std::vector<std::vector<std::uint32_t>> make_batches(std::size_t n, std::uint32_t batch_size, std::uint64_t seed) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::uint32_t>> out;
    out.reserve((n + batch_size - 1) / batch_size);
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return out;
}

double precision_at_k(std::span<const NeuronId> ranked, std::span<const NeuronId> truth, std::uint32_t k) {
    if (k == 0) throw std::invalid_argument("precision_at_k: k must be >= 1");
    const std::size_t top = std::min<std::size_t>(k, ranked.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < top; ++i) {
        if (std::find(truth.begin(), truth.end(), ranked[i]) != truth.end()) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

namespace {

void check(const SyntheticConfig& c) {
    if (c.num_features == 0 || c.num_labels == 0) throw ConfigError("synthetic: dimensions must be positive");
    if (c.min_labels == 0 || c.min_labels > c.max_labels || c.max_labels > c.num_labels) {
        throw ConfigError("synthetic: need 1 <= min_labels <= max_labels <= num_labels");
    }
    if (c.kept_per_label > c.prototype_size || c.prototype_size > c.num_features) {
        throw ConfigError("synthetic: need kept_per_label <= prototype_size <= num_features");
    }
    if (c.noise_features > c.num_features) throw ConfigError("synthetic: too many noise features");
    if (!(c.zipf >= 0.0)) throw ConfigError("synthetic: zipf exponent must be >= 0");
    if (c.num_clusters > 0) {
        if (c.num_clusters > c.num_labels) throw ConfigError("synthetic: more clusters than labels");
        if (c.cluster_features < c.prototype_size || c.cluster_features > c.num_features) {
            throw ConfigError("synthetic: need prototype_size <= cluster_features <= num_features");
        }
        if (c.max_labels > c.num_labels / c.num_clusters) {
            throw ConfigError("synthetic: max_labels exceeds the labels per cluster");
        }
    }
}

// k distinct values from [0, n), in draw order.
std::vector<std::uint32_t> distinct(std::uint32_t n, std::uint32_t k, Rng& rng) {
    std::vector<std::uint32_t> out;
    out.reserve(k);
    while (out.size() < k) {
        const auto v = std::uniform_int_distribution<std::uint32_t>(0, n - 1)(rng);
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    return out;
}

struct Prototype {
    std::vector<std::uint32_t> features;
    std::vector<Real> weights;
};

struct Topics {
    std::vector<std::uint32_t> of_label;
    std::vector<std::vector<std::uint32_t>> labels;
};

Dataset draw(const SyntheticConfig& c, const std::vector<Prototype>& protos, const Topics& topics,
             std::discrete_distribution<std::uint32_t>& popularity, std::uint32_t count, Rng& rng) {
    Dataset ds;
    ds.num_features = c.num_features;
    ds.num_labels = c.num_labels;
    ds.examples.reserve(count);
    std::uniform_int_distribution<std::uint32_t> label_count(c.min_labels, c.max_labels);
    std::uniform_real_distribution<Real> noise(0.1, 1.0);
    std::vector<std::uint32_t> slots;
    for (std::uint32_t e = 0; e < count; ++e) {
        Example ex;
        const std::uint32_t want = label_count(rng);
        while (ex.labels.size() < want) {
            std::uint32_t y = 0;
            if (ex.labels.empty() || topics.labels.empty()) {
                y = popularity(rng);
            } else {
                const auto& same = topics.labels[topics.of_label[ex.labels.front()]];
                y = same[std::uniform_int_distribution<std::size_t>(0, same.size() - 1)(rng)];
            }
            if (std::find(ex.labels.begin(), ex.labels.end(), y) == ex.labels.end()) ex.labels.push_back(y);
        }
        std::map<std::uint32_t, Real> acc;
        for (std::uint32_t y : ex.labels) {
            slots.resize(c.prototype_size);
            std::iota(slots.begin(), slots.end(), 0u);
            for (std::uint32_t i = 0; i < c.kept_per_label; ++i) {
                std::swap(slots[i], slots[std::uniform_int_distribution<std::uint32_t>(i, c.prototype_size - 1)(rng)]);
                acc[protos[y].features[slots[i]]] += protos[y].weights[slots[i]];
            }
        }
        for (std::uint32_t f : distinct(c.num_features, c.noise_features, rng)) acc[f] += noise(rng);
        std::sort(ex.labels.begin(), ex.labels.end());
        ex.features = SparseVector::from_pairs(c.num_features, {acc.begin(), acc.end()});
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

}  // namespace

SyntheticSplit make_synthetic(const SyntheticConfig& c) {
    check(c);
    Rng proto_rng(mix_seed(c.seed, 0));
    std::uniform_real_distribution<Real> weight(0.5, 1.5);
    Topics topics;
    std::vector<std::vector<std::uint32_t>> pools;
    if (c.num_clusters > 0) {
        topics.of_label.resize(c.num_labels);
        topics.labels.resize(c.num_clusters);
        for (std::uint32_t y = 0; y < c.num_labels; ++y) {
            topics.of_label[y] = y % c.num_clusters;
            topics.labels[y % c.num_clusters].push_back(y);
        }
        for (std::uint32_t t = 0; t < c.num_clusters; ++t) {
            pools.push_back(distinct(c.num_features, c.cluster_features, proto_rng));
        }
    }
    std::vector<Prototype> protos(c.num_labels);
    for (std::uint32_t y = 0; y < c.num_labels; ++y) {
        Prototype& p = protos[y];
        if (pools.empty()) {
            p.features = distinct(c.num_features, c.prototype_size, proto_rng);
        } else {
            const auto& pool = pools[topics.of_label[y]];
            for (std::uint32_t i : distinct(c.cluster_features, c.prototype_size, proto_rng)) {
                p.features.push_back(pool[i]);
            }
        }
        for (std::size_t i = 0; i < p.features.size(); ++i) p.weights.push_back(weight(proto_rng));
    }
    std::vector<double> pop(c.num_labels);
    for (std::uint32_t r = 0; r < c.num_labels; ++r) pop[r] = std::pow(static_cast<double>(r + 1), -c.zipf);
    std::discrete_distribution<std::uint32_t> popularity(pop.begin(), pop.end());

    SyntheticSplit split;
    Rng train_rng(mix_seed(c.seed, 1));
    split.train = draw(c, protos, topics, popularity, c.train_examples, train_rng);
    Rng test_rng(mix_seed(c.seed, 2));
    split.test = draw(c, protos, topics, popularity, c.test_examples, test_rng);
    return split;
}

}  // namespace slide
