#pragma once

// Model checkpoints as JSON:
//   {"format": "tmcseg-checkpoint", "version": 1, "config": {...}, "seed": s, "step": n,
//    "params": [{"name", "rows", "cols", "group", "values": [...]}, ...]}
// Values are written with full double precision, so a reload is bit-exact.

#include <cstdint>
#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "tmcseg/models.hpp"

namespace tmcseg {

struct Checkpoint {
  models::TmcModel model;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

nlohmann::json checkpoint_to_json(const models::TmcModel& model, std::uint64_t seed, std::uint64_t step);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const models::TmcModel& model, std::uint64_t seed,
                     std::uint64_t step);
/// Throws ParseError on malformed JSON, ContractError on a layout or version mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tmcseg
