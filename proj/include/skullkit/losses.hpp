#pragma once

#include "skullkit/autodiff.hpp"
#include "skullkit/volume.hpp"

namespace skullkit {

// Soft Dice loss over softmax probabilities: per batch item and channel,
// dice = (2*sum(p*g) + eps_nr) / (sum(p) + sum(g) + eps_dr); the loss is
// 1 - mean over channels and batch. Both channels (background + foreground)
// participate; eps_nr = eps_dr = 1e-5.
Var dice_loss(const Var& logits, const Tensor& one_hot_target);

// Hard Dice coefficient 2|A∩B| / (|A| + |B|); 1.0 when both are empty.
double dice_metric(const Volume& pred, const Volume& truth);

}  // namespace skullkit
