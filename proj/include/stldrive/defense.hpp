#pragma once

#include "stldrive/agent.hpp"
#include "stldrive/dataset.hpp"

namespace stldrive::defense {

struct SmoothingConfig {
  int kernel_size{3};  // odd, >= 1; uniform box weights
};

// Convolves every action component of every trajectory with a uniform box
// kernel, edges handled by replication. Observations and rewards untouched.
dataset::Dataset smooth_actions(const dataset::Dataset& data, const SmoothingConfig& config);

// Clipped-noisy-gradient training: train_bc with the clip threshold and
// noise standard deviation set.
agent::Policy dpsgd_train(const dataset::Dataset& data, double clip, double noise_std,
                          agent::TrainConfig config, agent::TrainLog* train_log = nullptr);

}  // namespace stldrive::defense
