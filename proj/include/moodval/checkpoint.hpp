#pragma once

// Binary checkpoint: magic "MVALCKPT", format version, a JSON metadata block
// (experiment config snapshot, epoch, validation CCC), then every parameter
// and buffer as (name, shape, raw doubles). Reload is bit-exact.

#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

#include "moodval/nn.hpp"

namespace moodval {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json meta;
  std::vector<nn::NamedTensor> tensors;
};

/// Parameters followed by buffers, in registration order.
std::vector<nn::NamedTensor> state_of(const nn::Module& module);

/// Written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const nn::Module& module,
                     const nlohmann::json& meta);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies values into `module`; names and shapes must match exactly.
void load_state(nn::Module& module, const Checkpoint& checkpoint);

}  // namespace moodval
