#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "skullkit/model.hpp"
#include "skullkit/optim.hpp"
#include "skullkit/trainer_config.hpp"

namespace skullkit {

// Binary layout: magic "SKRC", u32 version, u64 config-JSON length, config
// JSON, optimizer state blob, then the f32 little-endian parameter blob in
// model declaration order.
struct Checkpoint {
  TrainConfig config;
  int64_t epoch = 0;
  double best_val_dice = -1.0;
  AdamState optimizer;
  std::vector<std::vector<float>> parameters;  // declaration order
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<uint8_t> checkpoint_to_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(const std::vector<uint8_t>& bytes);

Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace skullkit
