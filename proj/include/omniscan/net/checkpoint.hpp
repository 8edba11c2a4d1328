#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "omniscan/net/model.hpp"
#include "omniscan/numerics/serialize.hpp"

namespace omniscan::net {

// Layout: 8-byte magic, u32 config length, config text (key=value lines),
// u32 entry count, then per entry u32 name length, name, tensor record.
inline constexpr std::array<char, 8> kCheckpointMagic{'O', 'M', 'N', 'I', 'C', 'K', 'P', '1'};

struct Checkpoint {
  NetConfig config;
  std::map<std::string, Tensor<float>> tensors;
};

/// Writes `path` and a text manifest at `path` + ".manifest" (config, then name and shape per entry).
void save_checkpoint(const std::filesystem::path& path, Detector<float>& model);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Builds the model from the stored config and copies every tensor in.
/// Throws FormatError on missing, extra or mis-shaped entries.
Detector<float> load_detector(const std::filesystem::path& path);
void apply_checkpoint(Detector<float>& model, const Checkpoint& ckpt);

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

}  // namespace omniscan::net
