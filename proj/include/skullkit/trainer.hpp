#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "skullkit/checkpoint.hpp"
#include "skullkit/dataset.hpp"
#include "skullkit/tensor.hpp"
#include "skullkit/trainer_config.hpp"
#include "skullkit/volume.hpp"

namespace skullkit {

// The exact transform pair used by both the training loop and reconstruct();
// keeping them shared is what guarantees preprocessing parity.
Tensor preprocess_input(const Volume& defective, const TrainConfig& config);
Tensor preprocess_target(const Volume& complete, const TrainConfig& config);

// Full training loop: shuffled batches, concurrent sample preprocessing,
// Dice loss + Adam, periodic validation, last/best checkpoints in
// config.checkpoint_dir. Progress lines ("epoch=E step=S loss=L",
// "epoch=E val_dice=D ...") go to `log` when non-null.
Checkpoint train(const std::filesystem::path& manifest_path, const TrainConfig& config,
                 std::ostream* log = nullptr,
                 const std::optional<std::filesystem::path>& resume = std::nullopt);

// Predict the completed skull for a defective input: preprocess exactly as in
// training, forward, argmax over channels, resize back to the input grid,
// binarize at 0.5.
Volume reconstruct(const Checkpoint& ckpt, const Volume& defective);

// Per-case and aggregate Dice (foreground-only, both-channel, and restricted
// to the ground-truth implant bounding box) over one split. Returns a JSON
// report.
std::string evaluate(const Checkpoint& ckpt, const std::filesystem::path& manifest_path,
                     const std::string& split);

}  // namespace skullkit
