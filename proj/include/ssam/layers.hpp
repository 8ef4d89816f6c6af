#pragma once

#include <Eigen/Core>

#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssam/tensor.hpp"

namespace ssam {

enum class Mode { kTrain, kInfer };

/// Non-trainable state that must travel with a checkpoint (batch-norm
/// running statistics).
struct Buffer {
  std::string name;
  Vector* value;
};

/// A differentiable stage operating on [batch, channel, time] tensors.
///
/// `forward` caches whatever `backward` needs; `backward` consumes that cache,
/// accumulates parameter gradients and returns the gradient w.r.t. the input.
/// Calling `backward` twice without an intervening `forward` is a StateError.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual std::vector<Buffer> buffers() { return {}; }
  virtual std::string name() const = 0;
};

/// Spectrum attention: idct(dct(x) * mask) with a learnable mask that
/// starts at all ones.
class SamLayer {
 public:
  explicit SamLayer(Index length, std::string param_name = "sam.mask");

  Index length() const { return mask_.value.size(); }
  Parameter& mask() { return mask_; }
  const Parameter& mask() const { return mask_; }

  /// Filters every row of `rows` (one series per row).
  RowMatrix forward_rows(const Eigen::Ref<const RowMatrix>& rows);
  RowMatrix backward_rows(const Eigen::Ref<const RowMatrix>& grad_out);

  Vector forward(const Eigen::Ref<const Vector>& x);
  Vector backward(const Eigen::Ref<const Vector>& grad_out);

 private:
  Parameter mask_;
  RowMatrix spectra_;
  bool cached_ = false;
};

/// Segmented spectrum attention. The input series is cut into K tumbling
/// windows of length n / K (remainder dropped) and each window gets its own
/// SamLayer; window i becomes output channel i.
class SsamLayer : public Layer {
 public:
  SsamLayer(Index input_length, Index segments);

  Index segments() const { return static_cast<Index>(sams_.size()); }
  Index segment_length() const { return segment_length_; }
  Index input_length() const { return input_length_; }
  SamLayer& segment(Index i) { return sams_.at(static_cast<std::size_t>(i)); }
  const SamLayer& segment(Index i) const { return sams_.at(static_cast<std::size_t>(i)); }

  /// [B, 1, n] -> [B, K, T_seg]
  Tensor forward(const Tensor& x, Mode mode = Mode::kTrain) override;
  Tensor backward(const Tensor& grad_out) override;

  /// Single series of length n -> [T_seg, K], column i is segment i filtered.
  Matrix forward_series(const Eigen::Ref<const Vector>& x);
  /// [T_seg, K] -> gradient w.r.t. the length-n input.
  Vector backward_series(const Eigen::Ref<const Matrix>& grad_out);

  std::vector<Parameter*> parameters() override;
  std::string name() const override { return "ssam"; }

 private:
  Index input_length_;
  Index segment_length_;
  std::vector<SamLayer> sams_;
};

/// 1-D cross-correlation with zero "same" padding: floor((k-1)/2) on the
/// left, the rest on the right.
class Conv1d : public Layer {
 public:
  Conv1d(Index in_channels, Index out_channels, Index kernel, std::string prefix = "conv");

  /// Glorot-uniform weights, zero bias.
  void initialize(std::mt19937_64& rng);

  Index in_channels() const { return in_channels_; }
  Index out_channels() const { return out_channels_; }
  Index kernel() const { return kernel_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

  Tensor forward(const Tensor& x, Mode mode = Mode::kTrain) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::string name() const override { return prefix_; }

 private:
  Index in_channels_;
  Index out_channels_;
  Index kernel_;
  std::string prefix_;
  Parameter weight_;  // [C_out, C_in, k]
  Parameter bias_;    // [C_out]
  RowMatrix columns_;  // (C_in * k) x (B * T)
  Index cached_batch_ = 0;
  Index cached_length_ = 0;
  bool cached_ = false;
};

/// Per-channel batch normalization over (batch, time).
class BatchNorm1d : public Layer {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;

  explicit BatchNorm1d(Index channels, std::string prefix = "bn");

  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  const Vector& running_mean() const { return running_mean_; }
  const Vector& running_var() const { return running_var_; }

  /// Train mode uses biased batch statistics and folds them into the running
  /// estimates as running = 0.9 * running + 0.1 * batch.
  Tensor forward(const Tensor& x, Mode mode = Mode::kTrain) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Buffer> buffers() override;
  std::string name() const override { return prefix_; }

 private:
  Index channels_;
  std::string prefix_;
  Parameter gamma_;
  Parameter beta_;
  Vector running_mean_;
  Vector running_var_;
  Tensor normalized_;
  Vector inv_std_;
  Mode cached_mode_ = Mode::kTrain;
  bool cached_ = false;
};

class Relu : public Layer {
 public:
  explicit Relu(std::string n = "relu") : name_(std::move(n)) {}
  Tensor forward(const Tensor& x, Mode mode = Mode::kTrain) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string name() const override { return name_; }

 private:
  std::string name_;
  Tensor input_;
  bool cached_ = false;
};

/// Mean over the time axis: [B, C, T] -> [B, C, 1].
class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode = Mode::kTrain) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string name() const override { return "gap"; }

 private:
  Index length_ = 0;
  bool cached_ = false;
};

/// Affine map on [B, C_in, 1] -> [B, C_out, 1].
class Dense : public Layer {
 public:
  Dense(Index in_features, Index out_features, std::string prefix = "dense");

  void initialize(std::mt19937_64& rng);
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

  Tensor forward(const Tensor& x, Mode mode = Mode::kTrain) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::string name() const override { return prefix_; }

 private:
  Index in_features_;
  Index out_features_;
  std::string prefix_;
  Parameter weight_;  // [C_out, C_in]
  Parameter bias_;
  RowMatrix input_;
  bool cached_ = false;
};

struct LossAndGrad {
  double loss;
  Matrix grad;  // d loss / d logits, same shape as the logits
};

/// Mean softmax cross-entropy over the batch; gradient is (softmax - onehot) / B.
LossAndGrad softmax_xent(const Eigen::Ref<const Matrix>& logits, std::span<const int> labels);

/// Row-wise softmax probabilities.
Matrix softmax(const Eigen::Ref<const Matrix>& logits);

}  // namespace ssam
