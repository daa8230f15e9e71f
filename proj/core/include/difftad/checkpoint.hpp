#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "difftad/params.hpp"

namespace difftad {

// Versioned binary checkpoint: magic, version, the run-config echo, then one
// block per parameter (name, shape, row-major 32-bit little-endian reals).
// Byte-stable given identical parameters and config.
struct Checkpoint {
  std::string config_text;
  // ordered by insertion: modality name -> parameter store
  std::vector<std::pair<std::string, ParamStore>> stores;

  ParamStore* find(const std::string& modality);
  const ParamStore* find(const std::string& modality) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace difftad
