#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace usvtrack::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedVec {
  std::string name;
  std::vector<double>* data;
};

// Layout: 8-byte magic, u32 format version, u64 header length, JSON header
// (kind, meta, array manifest with names and counts), then the raw doubles in
// manifest order. Save/load round-trips bit-exactly.
void save_checkpoint_file(const std::string& path, const std::string& kind,
                          const nlohmann::json& meta, const std::vector<NamedVec>& state);

struct CheckpointFile {
  std::string kind;
  nlohmann::json meta;
  std::vector<std::pair<std::string, std::vector<double>>> arrays;
};

CheckpointFile load_checkpoint_file(const std::string& path, const std::string& expected_kind);

// Copies arrays into the destination vectors, matching name and size.
void bind_arrays(const CheckpointFile& file, const std::vector<NamedVec>& state);

}  // namespace usvtrack::ckpt
