#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsam/autodiff/graph.hpp"
#include "dsam/features.hpp"
#include "dsam/frontend.hpp"
#include "dsam/model/config.hpp"
#include "dsam/model/model.hpp"
#include "json.hpp"

namespace dsam::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout (little-endian):
//   "DSAMCKPT", u32 version, u32 n + n bytes of JSON metadata,
//   u32 parameter count, then per parameter:
//   u32 + name, u32 + group, u32 rank, u32 extents[rank], f32 values.
struct Checkpoint {
  ModelConfig model;
  ad::ParameterStore params;
  frontend::FrontendConfig frontend;
  std::vector<std::string> speakers;
  features::NormStats stats;
  std::uint64_t step = 0;
  nlohmann::json run_config;  // echo of the configuration that produced it
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

AcousticModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace dsam::model
