#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace slide {

// Scalar used for weights, activations and features. Checkpoints are written
// as f32 regardless.
using Real = double;

using NeuronId = std::uint32_t;
using HashKey = std::uint64_t;

// Engine-wide RNG. All random state is derived from explicit seeds.
using Rng = std::mt19937_64;

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DimensionMismatch : public std::invalid_argument {
public:
    DimensionMismatch(std::size_t expected, std::size_t actual)
        : std::invalid_argument("dimension mismatch: expected " + std::to_string(expected) +
                                ", got " + std::to_string(actual)) {}
};

// SplitMix64 finalizer. Used to derive independent seeds from (seed, stream)
// pairs so per-slot and per-table generators never share a stream.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace slide
