#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "skullkit/model.hpp"

namespace skullkit {

struct TrainConfig {
  ModelConfig model;
  std::array<int64_t, 3> resize{32, 32, 32};
  float lr = 1e-3f;
  int batch_size = 2;
  int epochs = 10;
  uint64_t seed = 0;
  int workers = 2;
  std::string checkpoint_dir = "checkpoints";
  int validate_every = 1;
  std::string manifest;  // dataset manifest path
  float binarize_threshold = 0.5f;

  void validate() const;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  static TrainConfig from_file(const std::string& path);

  // Fields that must agree when resuming from a checkpoint (epochs,
  // checkpoint_dir, workers and manifest may change between runs).
  bool resume_compatible(const TrainConfig& other) const;
};

}  // namespace skullkit
