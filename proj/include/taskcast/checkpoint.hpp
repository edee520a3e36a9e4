#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "taskcast/dataset_io.hpp"
#include "taskcast/model.hpp"

namespace taskcast {

struct Checkpoint {
  CombinedModelParams params;
  std::optional<Standardizer> standardizer;
  nlohmann::json run_config;  // echo of the settings that produced the weights
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "TCKP" u32 version
//   u32 json_len, json bytes  {"model": ..., "run": ...}
//   u32 tensor_count, then per tensor:
//     u32 name_len, name, u32 rows, u32 cols, rows*cols f64
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace taskcast
