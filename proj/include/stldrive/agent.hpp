#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stldrive/dataset.hpp"
#include "stldrive/sim.hpp"

namespace stldrive::agent {

// Feed-forward policy [obs_dim, 64, 64, 2], tanh throughout. The output tanh
// bounds actions to (-1, 1).
struct Policy {
  std::vector<int> layer_sizes;
  // weights[l] is row-major [out x in]; biases[l] has one entry per output.
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  int obs_dim() const { return layer_sizes.front(); }
  size_t parameter_count() const;

  std::array<double, 2> forward(std::span<const double> obs) const;
};

Policy init_policy(int obs_dim, uint64_t seed);

struct TrainConfig {
  double learning_rate{1e-3};
  double momentum{0.9};
  int epochs{200};
  int batch_size{128};
  uint64_t seed{0};
  std::optional<double> clip;       // l2 threshold on the batch gradient
  std::optional<double> noise_std;  // Gaussian noise added after clipping
  double gamma{0.99};               // stored metadata only; BC does not discount
};

struct Batch {
  std::vector<std::vector<double>> observations;
  std::vector<std::array<double, 2>> actions;
};

// Mean squared action error over the batch: L = mean ||forward(s) - a||^2.
double loss(const Policy& policy, const Batch& batch);

// Exact analytic gradient of the batch loss, flattened in parameter order
// (per layer: weights row-major, then biases).
std::vector<double> grad(const Policy& policy, const Batch& batch);

// As above, additionally reporting the batch loss from the same forward pass.
std::vector<double> grad(const Policy& policy, const Batch& batch, double* loss_out);

std::vector<double> flatten(const Policy& policy);
void unflatten(Policy& policy, std::span<const double> flat);

struct TrainLog {
  std::vector<double> epoch_loss;
  double max_applied_grad_norm{0.0};  // post-clip, pre-noise
};

// Mini-batch SGD with momentum on the behavior-cloning loss. Deterministic
// for a fixed seed, including the optional gradient noise. Throws on a
// non-finite loss.
Policy train_bc(const dataset::Dataset& data, const TrainConfig& config,
                TrainLog* train_log = nullptr);

// forward with a final clamp to [-1, 1].
sim::Action act(const Policy& policy, std::span<const double> obs);

// Ego controller backed by a trained policy.
sim::EgoController policy_controller(const Policy& policy);

// Policy file: magic "TPOL", version, layer sizes, row-major f64 blocks,
// trailing CRC32. Little-endian.
void save_policy(const Policy& policy, const std::string& path);
Policy load_policy(const std::string& path);

}  // namespace stldrive::agent
