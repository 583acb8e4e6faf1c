// Binary parameter checkpoints. Byte layout (all integers little-endian):
//
//   magic      8 bytes  "LEAPTCKP"
//   version    u32      = 1
//   meta_len   u32      followed by meta_len bytes of UTF-8 "key=value\n" lines
//   count      u32      number of tensors
//   per tensor:
//     name_len u32, name bytes
//     rows u32, cols u32
//     rows*cols IEEE-754 binary64 values, row-major
//
// See docs/formats.md.
#pragma once

#include "leapt/tape.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace leapt {

using Metadata = std::map<std::string, std::string>;

struct Checkpoint {
  Metadata metadata;
  std::map<std::string, Matrix> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const ParamList& params, const Metadata& metadata);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies tensors into matching parameters; every parameter must be present
/// with the same shape.
void load_into(const Checkpoint& ckpt, const ParamList& params);

}  // namespace leapt
