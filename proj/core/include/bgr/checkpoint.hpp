#pragma once

#include <string>

#include "bgr/trainer.hpp"

namespace bgr {

// Binary snapshot of a TrainerState: architecture, task->head map, trained
// task list, parameters (posterior or point, current + previous) and EWC
// anchors. Replay buffer contents are deliberately not persisted — sampling
// from a checkpoint starts fresh chains — only its dimensions survive.
void save_checkpoint(const std::string& path, const TrainerState& state);

// Throws "corrupt checkpoint: ..." on bad magic, truncation or any
// internal inconsistency.
TrainerState load_checkpoint(const std::string& path);

}  // namespace bgr
