#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ssam/layers.hpp"

namespace ssam {

struct ModelConfig {
  Index input_length = 0;
  Index num_classes = 0;
  Index segments = 1;  // K
  std::vector<Index> kernel_sizes = {8, 5};
  std::vector<Index> channels = {32, 8};
  bool with_ssam = true;

  /// Throws std::invalid_argument on the first violated constraint.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Named copy of every parameter value and buffer of a network.
using NetworkState = std::map<std::string, Vector>;

/// SSAM -> [conv -> batchnorm -> relu] x 2 -> global average pooling -> dense,
/// with a softmax cross-entropy head. Without SSAM the input feeds conv1
/// directly as a single channel.
class Network {
 public:
  explicit Network(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  /// [B, 1, n] -> logits [B, num_classes].
  Matrix forward(const Tensor& batch, Mode mode);
  /// Cross-entropy of the last forward's logits; back-propagates and
  /// accumulates every parameter gradient once. Returns the loss.
  double backward(std::span<const int> labels);

  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
  /// Nullptr when built without SSAM.
  SsamLayer* ssam() { return ssam_; }
  const SsamLayer* ssam() const { return ssam_; }

  std::vector<Parameter*> parameters();
  Parameter& parameter(const std::string& name);
  Index parameter_count();
  void zero_grad();

  NetworkState state();
  void load_state(const NetworkState& state);

  /// Glorot-uniform conv/dense weights, unit masks, identity batchnorm.
  void initialize(std::uint64_t seed);

 private:
  ModelConfig cfg_;
  std::vector<std::unique_ptr<Layer>> layers_;
  SsamLayer* ssam_ = nullptr;
  Matrix logits_;
  bool has_logits_ = false;
};

/// Builds and seeds the network described by `cfg`.
Network build_ssam_cnn(const ModelConfig& cfg, std::uint64_t seed);

/// One plain SGD step: p -= lr * grad, then for L1-regularized (mask)
/// parameters additionally p -= lr * l1_coeff * sign(p). Gradients are
/// zeroed afterwards. Throws DivergenceError naming the first parameter with a
/// non-finite gradient, before anything is modified.
void sgd_step(Network& net, double lr, double l1_coeff);

/// Mask weights of every SSAM segment.
std::vector<Vector> masks(const Network& net);

// Checkpoint: versioned JSON holding the ModelConfig, free-form metadata and
// every named tensor. Doubles are written in shortest round-trip form, so
// save/load is bit-exact.
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  NetworkState state;
  std::map<std::string, std::string> metadata;
};

void save_checkpoint(const std::filesystem::path& path, Network& net,
                     const std::map<std::string, std::string>& metadata = {});
Checkpoint read_checkpoint(const std::filesystem::path& path);
Network load_network(const Checkpoint& ckpt);

}  // namespace ssam
