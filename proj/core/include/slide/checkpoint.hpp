#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "slide/network.hpp"

namespace slide {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Writes weights, biases and (optionally) Adam state as little-endian f32.
// The byte layout is described in docs/checkpoint.md.
void save_checkpoint(const Network& net, const std::filesystem::path& path, bool include_adam = true);

// Loads into a network whose layer shapes already match the file. Hash
// tables are rebuilt from the loaded weights.
void load_checkpoint(Network& net, const std::filesystem::path& path);

}  // namespace slide
