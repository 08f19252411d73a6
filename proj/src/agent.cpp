#include "stldrive/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <zlib.h>

#include "stldrive/rand.hpp"

namespace stldrive::agent {

namespace {

using rand_util::SplitMix;

constexpr char kMagic[4] = {'T', 'P', 'O', 'L'};
constexpr uint32_t kVersion = 1;

std::vector<double> layer_forward(const std::vector<double>& w, const std::vector<double>& b,
                                  std::span<const double> in) {
  const size_t n_out = b.size();
  const size_t n_in = in.size();
  std::vector<double> out(n_out);
  for (size_t o = 0; o < n_out; ++o) {
    double z = b[o];
    const double* row = w.data() + o * n_in;
    for (size_t i = 0; i < n_in; ++i) z += row[i] * in[i];
    out[o] = std::tanh(z);
  }
  return out;
}

}  // namespace

size_t Policy::parameter_count() const {
  size_t n = 0;
  for (size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

std::array<double, 2> Policy::forward(std::span<const double> obs) const {
  if (static_cast<int>(obs.size()) != obs_dim()) {
    throw std::invalid_argument("observation dimension mismatch");
  }
  std::vector<double> act(obs.begin(), obs.end());
  for (size_t l = 0; l < weights.size(); ++l) {
    act = layer_forward(weights[l], biases[l], act);
  }
  return {act[0], act[1]};
}

Policy init_policy(int obs_dim, uint64_t seed) {
  Policy p;
  p.layer_sizes = {obs_dim, 64, 64, 2};
  SplitMix rng(seed);
  for (size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
    const int n_in = p.layer_sizes[l];
    const int n_out = p.layer_sizes[l + 1];
    const double scale = std::sqrt(6.0 / (n_in + n_out));
    std::vector<double> w(static_cast<size_t>(n_in) * n_out);
    for (auto& v : w) v = (2.0 * rng.next_double() - 1.0) * scale;
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::vector<double>(static_cast<size_t>(n_out), 0.0));
  }
  return p;
}

double loss(const Policy& policy, const Batch& batch) {
  if (batch.observations.empty()) throw std::invalid_argument("empty batch");
  double total = 0.0;
  for (size_t i = 0; i < batch.observations.size(); ++i) {
    const auto out = policy.forward(batch.observations[i]);
    const double d0 = out[0] - batch.actions[i][0];
    const double d1 = out[1] - batch.actions[i][1];
    total += d0 * d0 + d1 * d1;
  }
  return total / static_cast<double>(batch.observations.size());
}

std::vector<double> grad(const Policy& policy, const Batch& batch) {
  return grad(policy, batch, nullptr);
}

std::vector<double> grad(const Policy& policy, const Batch& batch, double* loss_out) {
  if (batch.observations.empty()) throw std::invalid_argument("empty batch");
  const size_t n_layers = policy.weights.size();

  std::vector<std::vector<double>> gw(n_layers);
  std::vector<std::vector<double>> gb(n_layers);
  for (size_t l = 0; l < n_layers; ++l) {
    gw[l].assign(policy.weights[l].size(), 0.0);
    gb[l].assign(policy.biases[l].size(), 0.0);
  }

  const double inv_n = 1.0 / static_cast<double>(batch.observations.size());
  double loss_acc = 0.0;
  for (size_t s = 0; s < batch.observations.size(); ++s) {
    // Forward pass keeping every activation.
    std::vector<std::vector<double>> acts;
    acts.emplace_back(batch.observations[s].begin(), batch.observations[s].end());
    for (size_t l = 0; l < n_layers; ++l) {
      acts.push_back(layer_forward(policy.weights[l], policy.biases[l], acts.back()));
    }

    // dL/d(output) for the squared error of this sample, averaged over the batch.
    std::vector<double> delta(2);
    for (int k = 0; k < 2; ++k) {
      const double err =
          acts.back()[static_cast<size_t>(k)] - batch.actions[s][static_cast<size_t>(k)];
      loss_acc += err * err * inv_n;
      delta[static_cast<size_t>(k)] = 2.0 * err * inv_n;
    }

    for (size_t l = n_layers; l-- > 0;) {
      const auto& in = acts[l];
      const auto& out = acts[l + 1];
      const size_t n_out = out.size();
      const size_t n_in = in.size();
      std::vector<double> prev_delta(n_in, 0.0);
      for (size_t o = 0; o < n_out; ++o) {
        const double dz = delta[o] * (1.0 - out[o] * out[o]);  // tanh'
        gb[l][o] += dz;
        double* grow = gw[l].data() + o * n_in;
        const double* wrow = policy.weights[l].data() + o * n_in;
        for (size_t i = 0; i < n_in; ++i) {
          grow[i] += dz * in[i];
          prev_delta[i] += dz * wrow[i];
        }
      }
      delta = std::move(prev_delta);
    }
  }
  if (loss_out) *loss_out = loss_acc;

  std::vector<double> flat;
  flat.reserve(policy.parameter_count());
  for (size_t l = 0; l < n_layers; ++l) {
    flat.insert(flat.end(), gw[l].begin(), gw[l].end());
    flat.insert(flat.end(), gb[l].begin(), gb[l].end());
  }
  return flat;
}

std::vector<double> flatten(const Policy& policy) {
  std::vector<double> flat;
  flat.reserve(policy.parameter_count());
  for (size_t l = 0; l < policy.weights.size(); ++l) {
    flat.insert(flat.end(), policy.weights[l].begin(), policy.weights[l].end());
    flat.insert(flat.end(), policy.biases[l].begin(), policy.biases[l].end());
  }
  return flat;
}

void unflatten(Policy& policy, std::span<const double> flat) {
  size_t pos = 0;
  for (size_t l = 0; l < policy.weights.size(); ++l) {
    std::copy_n(flat.begin() + pos, policy.weights[l].size(), policy.weights[l].begin());
    pos += policy.weights[l].size();
    std::copy_n(flat.begin() + pos, policy.biases[l].size(), policy.biases[l].begin());
    pos += policy.biases[l].size();
  }
  if (pos != flat.size()) throw std::invalid_argument("flat parameter size mismatch");
}

Policy train_bc(const dataset::Dataset& data, const TrainConfig& config, TrainLog* train_log) {
  if (data.records.empty()) throw std::invalid_argument("training dataset is empty");
  if (config.learning_rate <= 0.0 || config.epochs < 1 || config.batch_size < 1) {
    throw std::invalid_argument("invalid training configuration");
  }

  // Flatten the dataset into (obs, action) pairs.
  std::vector<const dataset::Transition*> samples;
  for (const auto& r : data.records) {
    for (const auto& t : r.steps) samples.push_back(&t);
  }
  if (samples.empty()) throw std::invalid_argument("training dataset has no transitions");

  // Standardize inputs for training. Raw observations cluster around
  // constants (rays near 1.0), which conditions the loss badly for plain
  // momentum SGD; the affine transform is folded back into the first layer
  // afterwards so the returned policy still consumes raw observations.
  const size_t dim = data.obs_dim;
  std::vector<double> mean(dim, 0.0), stddev(dim, 0.0);
  for (const auto* t : samples) {
    for (size_t i = 0; i < dim; ++i) mean[i] += t->observation[i];
  }
  for (size_t i = 0; i < dim; ++i) mean[i] /= static_cast<double>(samples.size());
  for (const auto* t : samples) {
    for (size_t i = 0; i < dim; ++i) {
      const double d = t->observation[i] - mean[i];
      stddev[i] += d * d;
    }
  }
  for (size_t i = 0; i < dim; ++i) {
    // Floor keeps the folded first-layer gain bounded on near-constant dims.
    stddev[i] = std::max(std::sqrt(stddev[i] / static_cast<double>(samples.size())), 0.05);
  }
  std::vector<std::vector<double>> normalized(samples.size());
  for (size_t s = 0; s < samples.size(); ++s) {
    normalized[s].resize(dim);
    for (size_t i = 0; i < dim; ++i) {
      normalized[s][i] = (samples[s]->observation[i] - mean[i]) / stddev[i];
    }
  }

  Policy policy = init_policy(static_cast<int>(data.obs_dim), config.seed);
  std::vector<double> params = flatten(policy);
  std::vector<double> velocity(params.size(), 0.0);

  SplitMix shuffle_rng(rand_util::child_seed(config.seed, 1));
  SplitMix noise_rng(rand_util::child_seed(config.seed, 2));

  std::vector<size_t> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  const size_t batch_size = static_cast<size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
    }

    double epoch_loss = 0.0;
    size_t n_batches = 0;
    for (size_t start = 0; start < order.size(); start += batch_size) {
      const size_t end = std::min(start + batch_size, order.size());
      Batch batch;
      batch.observations.reserve(end - start);
      batch.actions.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        const auto* t = samples[order[i]];
        batch.observations.push_back(normalized[order[i]]);
        batch.actions.push_back({t->action[0], t->action[1]});
      }

      double batch_loss = 0.0;
      std::vector<double> g = grad(policy, batch, &batch_loss);
      epoch_loss += batch_loss;
      ++n_batches;

      if (config.clip) {
        double norm2 = 0.0;
        for (double v : g) norm2 += v * v;
        const double norm = std::sqrt(norm2);
        if (norm > *config.clip && norm > 0.0) {
          const double scale = *config.clip / norm;
          for (double& v : g) v *= scale;
        }
      }
      if (train_log) {
        double norm2 = 0.0;
        for (double v : g) norm2 += v * v;
        train_log->max_applied_grad_norm =
            std::max(train_log->max_applied_grad_norm, std::sqrt(norm2));
      }
      if (config.noise_std && *config.noise_std > 0.0) {
        for (double& v : g) v += *config.noise_std * noise_rng.next_gaussian();
      }

      for (size_t i = 0; i < params.size(); ++i) {
        velocity[i] = config.momentum * velocity[i] - config.learning_rate * g[i];
        params[i] += velocity[i];
      }
      unflatten(policy, params);
    }

    epoch_loss /= static_cast<double>(n_batches);
    if (!std::isfinite(epoch_loss)) {
      throw std::runtime_error("training diverged: non-finite loss at epoch " +
                               std::to_string(epoch));
    }
    if (train_log) train_log->epoch_loss.push_back(epoch_loss);
  }

  // Fold the standardization into the first layer:
  // w'·x + b' = w·(x − μ)/σ + b.
  const int n_hidden = policy.layer_sizes[1];
  for (int o = 0; o < n_hidden; ++o) {
    double shift = 0.0;
    for (size_t i = 0; i < dim; ++i) {
      double& w = policy.weights[0][static_cast<size_t>(o) * dim + i];
      shift += w * mean[i] / stddev[i];
      w /= stddev[i];
    }
    policy.biases[0][static_cast<size_t>(o)] -= shift;
  }
  return policy;
}

sim::Action act(const Policy& policy, std::span<const double> obs) {
  const auto out = policy.forward(obs);
  return sim::Action{std::clamp(out[0], -1.0, 1.0), std::clamp(out[1], -1.0, 1.0)};
}

sim::EgoController policy_controller(const Policy& policy) {
  return [policy](const sim::World&, const sim::EgoObservation& obs, int) {
    return act(policy, obs.values);
  };
}

namespace {

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

uint32_t get_u32(const std::string& buf, size_t& pos) {
  if (pos + 4 > buf.size()) throw std::runtime_error("policy file truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
  return v;
}

double get_f64(const std::string& buf, size_t& pos) {
  if (pos + 8 > buf.size()) throw std::runtime_error("policy file truncated");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

void save_policy(const Policy& policy, const std::string& path) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<uint32_t>(policy.layer_sizes.size()));
  for (int s : policy.layer_sizes) put_u32(buf, static_cast<uint32_t>(s));
  for (size_t l = 0; l < policy.weights.size(); ++l) {
    for (double v : policy.weights[l]) put_f64(buf, v);
    for (double v : policy.biases[l]) put_f64(buf, v);
  }
  const uint32_t crc = static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
  put_u32(buf, crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write policy file: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Policy load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open policy file: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 16) throw std::runtime_error("policy file truncated");

  size_t tail = buf.size() - 4;
  uint32_t stored_crc = get_u32(buf, tail);
  const uint32_t crc = static_cast<uint32_t>(::crc32(
      0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
  if (crc != stored_crc) throw std::runtime_error("policy checksum failure");

  size_t pos = 0;
  if (buf.substr(0, 4) != std::string(kMagic, 4)) {
    throw std::runtime_error("not a policy file (bad magic)");
  }
  pos = 4;
  const uint32_t version = get_u32(buf, pos);
  if (version != kVersion) {
    throw std::runtime_error("unsupported policy version " + std::to_string(version));
  }
  const uint32_t n_sizes = get_u32(buf, pos);
  Policy policy;
  for (uint32_t i = 0; i < n_sizes; ++i) {
    policy.layer_sizes.push_back(static_cast<int>(get_u32(buf, pos)));
  }
  for (size_t l = 0; l + 1 < policy.layer_sizes.size(); ++l) {
    const size_t n_in = static_cast<size_t>(policy.layer_sizes[l]);
    const size_t n_out = static_cast<size_t>(policy.layer_sizes[l + 1]);
    std::vector<double> w(n_in * n_out);
    for (auto& v : w) v = get_f64(buf, pos);
    std::vector<double> b(n_out);
    for (auto& v : b) v = get_f64(buf, pos);
    policy.weights.push_back(std::move(w));
    policy.biases.push_back(std::move(b));
  }
  if (pos != buf.size() - 4) throw std::runtime_error("policy file has trailing bytes");
  return policy;
}

}  // namespace stldrive::agent
