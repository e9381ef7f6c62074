#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rrseg/model.hpp"

namespace rrseg {

// Optimizer/loop state carried inside a checkpoint so training can resume
// with a bit-exact loss trajectory.
struct TrainState {
    int64_t step = 0;
    int64_t epoch = 0;  // epochs completed
    double best_giou = -1.0;
    std::string rng_state;
    // aligned with the model's trainable parameter order: (m, v) moments
    std::vector<std::pair<Tensor, Tensor>> moments;
};

// Single binary archive: serialized config text, then name-tagged
// little-endian float32 arrays for every parameter and buffer, then the
// optional train state. Loading rebuilds the model from the stored config and
// verifies the shape of every array.
void save_checkpoint(const std::string& path, Model<float>& model,
                     const TrainState* state = nullptr);

ModelConfig peek_checkpoint_config(const std::string& path);

std::unique_ptr<Model<float>> load_checkpoint(const std::string& path,
                                              std::optional<TrainState>* state_out = nullptr);

}  // namespace rrseg
