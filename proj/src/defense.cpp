#include "stldrive/defense.hpp"

#include <algorithm>
#include <stdexcept>

namespace stldrive::defense {

dataset::Dataset smooth_actions(const dataset::Dataset& data, const SmoothingConfig& config) {
  if (config.kernel_size < 1 || config.kernel_size % 2 == 0) {
    throw std::invalid_argument("kernel size must be an odd positive integer");
  }
  const int half = config.kernel_size / 2;

  dataset::Dataset out = data;
  for (size_t r = 0; r < out.records.size(); ++r) {
    auto& record = out.records[r];
    const int n = static_cast<int>(record.steps.size());
    if (n < config.kernel_size) {
      throw std::invalid_argument("trajectory shorter than the smoothing kernel");
    }
    const auto& original = data.records[r].steps;
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 2; ++c) {
        double sum = 0.0;
        for (int k = -half; k <= half; ++k) {
          const int j = std::clamp(i + k, 0, n - 1);  // replication padding
          sum += original[static_cast<size_t>(j)].action[c];
        }
        record.steps[static_cast<size_t>(i)].action[c] =
            sum / static_cast<double>(config.kernel_size);
      }
    }
  }
  out.metadata["smoothed_kernel"] = config.kernel_size;
  return out;
}

agent::Policy dpsgd_train(const dataset::Dataset& data, double clip, double noise_std,
                          agent::TrainConfig config, agent::TrainLog* train_log) {
  if (clip <= 0.0) throw std::invalid_argument("clip threshold must be positive");
  if (noise_std < 0.0) throw std::invalid_argument("noise std must be non-negative");
  config.clip = clip;
  config.noise_std = noise_std;
  return agent::train_bc(data, config, train_log);
}

}  // namespace stldrive::defense
