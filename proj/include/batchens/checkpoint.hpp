#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "batchens/model.hpp"

namespace batchens {

// 64-bit FNV-1a. Used to stamp checkpoints with a fingerprint of the
// config text that produced them, so a reload can detect config drift.
std::uint64_t fnv1a64(std::string_view text);

struct Checkpoint {
  Model model;
  std::uint64_t config_fingerprint = 0;
  // Lifelong runs store each task's test accuracy measured right after that
  // task trained, so forgetting can be evaluated after a reload.
  std::vector<double> snapshot_accuracies;
};

// Binary container: magic "BENSCK01", the fingerprint, the full layer
// structure (kinds, shapes, activations, dropout rates), every parameter
// tensor in the trainable_params traversal order, then the snapshots.
// Integers and double bit patterns are written little-endian byte by byte,
// so the round trip is bit-exact regardless of host endianness.
void save_checkpoint(const std::string& path, const Model& model,
                     std::uint64_t config_fingerprint = 0,
                     const std::vector<double>& snapshot_accuracies = {});

// Throws IoError if the file cannot be read, FormatError if the contents
// are not a well-formed checkpoint (bad magic, truncation, shape nonsense,
// trailing bytes).
Checkpoint load_checkpoint(const std::string& path);

}  // namespace batchens
