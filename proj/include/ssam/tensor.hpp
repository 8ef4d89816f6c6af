#pragma once

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

#include "ssam/errors.hpp"

namespace ssam {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major [batch, channel, time] array. Rank-1 and rank-2 data are
/// carried with leading unit dimensions.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Index batch, Index channels, Index length)
      : batch_(batch), channels_(channels), length_(length),
        data_(Vector::Zero(batch * channels * length)) {}

  static Tensor from_vector(const Eigen::Ref<const Vector>& x) {
    Tensor t(1, 1, x.size());
    t.data_ = x;
    return t;
  }

  Index batch() const { return batch_; }
  Index channels() const { return channels_; }
  Index length() const { return length_; }
  Index size() const { return data_.size(); }

  bool same_shape(const Tensor& other) const {
    return batch_ == other.batch_ && channels_ == other.channels_ && length_ == other.length_;
  }

  double& operator()(Index b, Index c, Index t) { return data_[(b * channels_ + c) * length_ + t]; }
  double operator()(Index b, Index c, Index t) const {
    return data_[(b * channels_ + c) * length_ + t];
  }

  /// The [c, :] time series of sample b.
  auto series(Index b, Index c) { return data_.segment((b * channels_ + c) * length_, length_); }
  auto series(Index b, Index c) const {
    return data_.segment((b * channels_ + c) * length_, length_);
  }

  /// Sample b as a channels x length matrix.
  Eigen::Map<RowMatrix> sample(Index b) {
    return {data_.data() + b * channels_ * length_, channels_, length_};
  }
  Eigen::Map<const RowMatrix> sample(Index b) const {
    return {data_.data() + b * channels_ * length_, channels_, length_};
  }

  /// All (b, c) series stacked as rows: (batch * channels) x length.
  Eigen::Map<RowMatrix> rows() { return {data_.data(), batch_ * channels_, length_}; }
  Eigen::Map<const RowMatrix> rows() const { return {data_.data(), batch_ * channels_, length_}; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }

  std::string shape_string() const {
    return "[" + std::to_string(batch_) + ", " + std::to_string(channels_) + ", " +
           std::to_string(length_) + "]";
  }

 private:
  Index batch_ = 0;
  Index channels_ = 0;
  Index length_ = 0;
  Vector data_;
};

/// A trainable tensor and its accumulated gradient, stored flat.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, std::vector<Index> s, Vector init, bool l1 = false)
      : name(std::move(n)), shape(std::move(s)), value(std::move(init)),
        grad(Vector::Zero(value.size())), l1_regularized(l1) {}

  std::string name;
  std::vector<Index> shape;
  Vector value;
  Vector grad;
  // Spectral masks receive the L1 subgradient step.
  bool l1_regularized = false;

  void zero_grad() { grad.setZero(); }
};

}  // namespace ssam
