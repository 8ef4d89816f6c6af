#include "ssam/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ssam/transform.hpp"

namespace ssam {

namespace {

void require_cache(bool cached, const std::string& layer) {
  if (!cached) throw StateError(layer + ": backward called without a preceding forward");
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& layer) {
  if (!a.same_shape(b))
    throw ShapeError(layer + ": expected gradient of shape " + b.shape_string() + ", got " +
                     a.shape_string());
}

Vector glorot_uniform(Index count, double fan_in, double fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Vector v(count);
  for (Index i = 0; i < count; ++i) v[i] = dist(rng);
  return v;
}

}  // namespace

// ---------------------------------------------------------------- SamLayer

SamLayer::SamLayer(Index length, std::string param_name)
    : mask_(std::move(param_name), {length}, Vector::Ones(length), /*l1=*/true) {
  if (length < 1) throw std::invalid_argument("SamLayer: length must be positive");
  if (length > kMaxCachedDctLength)
    throw std::invalid_argument("SamLayer: length exceeds the cached DCT range");
}

RowMatrix SamLayer::forward_rows(const Eigen::Ref<const RowMatrix>& rows) {
  if (rows.cols() != length())
    throw ShapeError("sam: expected series of length " + std::to_string(length()) + ", got " +
                     std::to_string(rows.cols()));
  const auto& basis = dct_basis<double>(length());
  spectra_.noalias() = rows * basis.transpose();
  cached_ = true;
  RowMatrix masked = spectra_ * mask_.value.asDiagonal();
  return masked * basis;
}

RowMatrix SamLayer::backward_rows(const Eigen::Ref<const RowMatrix>& grad_out) {
  require_cache(cached_, mask_.name);
  if (grad_out.rows() != spectra_.rows() || grad_out.cols() != length())
    throw ShapeError("sam: gradient shape does not match the cached forward input");
  const auto& basis = dct_basis<double>(length());
  RowMatrix grad_spectra = grad_out * basis.transpose();
  mask_.grad += (spectra_.array() * grad_spectra.array()).colwise().sum().transpose().matrix();
  cached_ = false;
  RowMatrix masked = grad_spectra * mask_.value.asDiagonal();
  return masked * basis;
}

Vector SamLayer::forward(const Eigen::Ref<const Vector>& x) {
  RowMatrix row = x.transpose();
  return forward_rows(row).transpose();
}

Vector SamLayer::backward(const Eigen::Ref<const Vector>& grad_out) {
  RowMatrix row = grad_out.transpose();
  return backward_rows(row).transpose();
}

// --------------------------------------------------------------- SsamLayer

SsamLayer::SsamLayer(Index input_length, Index segments)
    : input_length_(input_length), segment_length_(segments > 0 ? input_length / segments : 0) {
  if (segments < 1) throw std::invalid_argument("ssam: segment count must be at least 1");
  if (segment_length_ < 2)
    throw std::invalid_argument("ssam: " + std::to_string(segments) + " segments of a length-" +
                                std::to_string(input_length) + " series leave fewer than 2 samples each");
  sams_.reserve(static_cast<std::size_t>(segments));
  for (Index i = 0; i < segments; ++i)
    sams_.emplace_back(segment_length_, "ssam.mask" + std::to_string(i));
}

Tensor SsamLayer::forward(const Tensor& x, Mode) {
  if (x.channels() != 1 || x.length() != input_length_)
    throw ShapeError("ssam: expected input [B, 1, " + std::to_string(input_length_) + "], got " +
                     x.shape_string());
  const Index batch = x.batch();
  Tensor out(batch, segments(), segment_length_);
  const auto rows = x.rows();
  for (Index i = 0; i < segments(); ++i) {
    RowMatrix filtered = sams_[static_cast<std::size_t>(i)].forward_rows(
        rows.middleCols(i * segment_length_, segment_length_));
    for (Index b = 0; b < batch; ++b) out.series(b, i) = filtered.row(b).transpose();
  }
  return out;
}

Tensor SsamLayer::backward(const Tensor& grad_out) {
  if (grad_out.channels() != segments() || grad_out.length() != segment_length_)
    throw ShapeError("ssam: gradient shape " + grad_out.shape_string() + " does not match output");
  const Index batch = grad_out.batch();
  Tensor grad_in(batch, 1, input_length_);
  RowMatrix per_segment(batch, segment_length_);
  for (Index i = 0; i < segments(); ++i) {
    for (Index b = 0; b < batch; ++b) per_segment.row(b) = grad_out.series(b, i).transpose();
    RowMatrix g = sams_[static_cast<std::size_t>(i)].backward_rows(per_segment);
    grad_in.rows().middleCols(i * segment_length_, segment_length_) = g;
  }
  return grad_in;
}

Matrix SsamLayer::forward_series(const Eigen::Ref<const Vector>& x) {
  Tensor out = forward(Tensor::from_vector(x));
  Matrix result(segment_length_, segments());
  for (Index i = 0; i < segments(); ++i) result.col(i) = out.series(0, i);
  return result;
}

Vector SsamLayer::backward_series(const Eigen::Ref<const Matrix>& grad_out) {
  if (grad_out.rows() != segment_length_ || grad_out.cols() != segments())
    throw ShapeError("ssam: expected gradient [" + std::to_string(segment_length_) + ", " +
                     std::to_string(segments()) + "]");
  Tensor g(1, segments(), segment_length_);
  for (Index i = 0; i < segments(); ++i) g.series(0, i) = grad_out.col(i);
  return backward(g).data();
}

std::vector<Parameter*> SsamLayer::parameters() {
  std::vector<Parameter*> params;
  for (auto& sam : sams_) params.push_back(&sam.mask());
  return params;
}

// ------------------------------------------------------------------ Conv1d

Conv1d::Conv1d(Index in_channels, Index out_channels, Index kernel, std::string prefix)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel),
      prefix_(std::move(prefix)),
      weight_(prefix_ + ".weight", {out_channels, in_channels, kernel},
              Vector::Zero(out_channels * in_channels * kernel)),
      bias_(prefix_ + ".bias", {out_channels}, Vector::Zero(out_channels)) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1)
    throw std::invalid_argument(prefix_ + ": channels and kernel size must be positive");
}

void Conv1d::initialize(std::mt19937_64& rng) {
  weight_.value = glorot_uniform(weight_.value.size(), double(in_channels_ * kernel_),
                                 double(out_channels_ * kernel_), rng);
  bias_.value.setZero();
}

Tensor Conv1d::forward(const Tensor& x, Mode) {
  if (x.channels() != in_channels_)
    throw ShapeError(prefix_ + ": expected " + std::to_string(in_channels_) +
                     " input channels, got " + std::to_string(x.channels()));
  const Index batch = x.batch();
  const Index length = x.length();
  const Index pad_left = (kernel_ - 1) / 2;

  columns_.setZero(in_channels_ * kernel_, batch * length);
  for (Index c = 0; c < in_channels_; ++c)
    for (Index j = 0; j < kernel_; ++j) {
      auto row = columns_.row(c * kernel_ + j);
      const Index shift = j - pad_left;
      const Index t_begin = std::max<Index>(0, -shift);
      const Index t_end = std::min<Index>(length, length - shift);
      if (t_end <= t_begin) continue;
      for (Index b = 0; b < batch; ++b)
        row.segment(b * length + t_begin, t_end - t_begin) =
            x.series(b, c).segment(t_begin + shift, t_end - t_begin).transpose();
    }
  cached_batch_ = batch;
  cached_length_ = length;
  cached_ = true;

  Eigen::Map<const RowMatrix> w(weight_.value.data(), out_channels_, in_channels_ * kernel_);
  RowMatrix response = w * columns_;
  Tensor out(batch, out_channels_, length);
  for (Index b = 0; b < batch; ++b)
    out.sample(b) = (response.middleCols(b * length, length).colwise() + bias_.value);
  return out;
}

Tensor Conv1d::backward(const Tensor& grad_out) {
  require_cache(cached_, prefix_);
  const Index batch = cached_batch_;
  const Index length = cached_length_;
  if (grad_out.batch() != batch || grad_out.channels() != out_channels_ ||
      grad_out.length() != length)
    throw ShapeError(prefix_ + ": gradient shape " + grad_out.shape_string() +
                     " does not match the forward output");

  RowMatrix g(out_channels_, batch * length);
  for (Index b = 0; b < batch; ++b) g.middleCols(b * length, length) = grad_out.sample(b);

  Eigen::Map<RowMatrix> grad_w(weight_.grad.data(), out_channels_, in_channels_ * kernel_);
  grad_w.noalias() += g * columns_.transpose();
  bias_.grad += g.rowwise().sum();

  Eigen::Map<const RowMatrix> w(weight_.value.data(), out_channels_, in_channels_ * kernel_);
  RowMatrix grad_columns = w.transpose() * g;

  const Index pad_left = (kernel_ - 1) / 2;
  Tensor grad_in(batch, in_channels_, length);
  for (Index c = 0; c < in_channels_; ++c)
    for (Index j = 0; j < kernel_; ++j) {
      auto row = grad_columns.row(c * kernel_ + j);
      const Index shift = j - pad_left;
      const Index t_begin = std::max<Index>(0, -shift);
      const Index t_end = std::min<Index>(length, length - shift);
      if (t_end <= t_begin) continue;
      for (Index b = 0; b < batch; ++b)
        grad_in.series(b, c).segment(t_begin + shift, t_end - t_begin) +=
            row.segment(b * length + t_begin, t_end - t_begin).transpose();
    }
  cached_ = false;
  return grad_in;
}

// ------------------------------------------------------------- BatchNorm1d

BatchNorm1d::BatchNorm1d(Index channels, std::string prefix)
    : channels_(channels), prefix_(std::move(prefix)),
      gamma_(prefix_ + ".gamma", {channels}, Vector::Ones(channels)),
      beta_(prefix_ + ".beta", {channels}, Vector::Zero(channels)),
      running_mean_(Vector::Zero(channels)), running_var_(Vector::Ones(channels)) {
  if (channels < 1) throw std::invalid_argument(prefix_ + ": channel count must be positive");
}

std::vector<Buffer> BatchNorm1d::buffers() {
  return {{prefix_ + ".running_mean", &running_mean_}, {prefix_ + ".running_var", &running_var_}};
}

Tensor BatchNorm1d::forward(const Tensor& x, Mode mode) {
  if (x.channels() != channels_)
    throw ShapeError(prefix_ + ": expected " + std::to_string(channels_) + " channels, got " +
                     std::to_string(x.channels()));
  const Index batch = x.batch();
  const Index length = x.length();
  const double count = double(batch * length);
  if (mode == Mode::kTrain && batch * length < 2)
    throw std::invalid_argument(prefix_ + ": training mode needs at least 2 values per channel");

  Vector mean = running_mean_;
  Vector var = running_var_;
  if (mode == Mode::kTrain) {
    mean.setZero();
    var.setZero();
    for (Index b = 0; b < batch; ++b) mean += x.sample(b).rowwise().sum();
    mean /= count;
    for (Index b = 0; b < batch; ++b)
      var += (x.sample(b).colwise() - mean).array().square().rowwise().sum().matrix();
    var /= count;
    running_mean_ = kMomentum * running_mean_ + (1.0 - kMomentum) * mean;
    running_var_ = kMomentum * running_var_ + (1.0 - kMomentum) * var;
  }
  inv_std_ = (var.array() + kEpsilon).rsqrt().matrix();

  normalized_ = Tensor(batch, channels_, length);
  Tensor out(batch, channels_, length);
  for (Index b = 0; b < batch; ++b) {
    normalized_.sample(b) = (x.sample(b).colwise() - mean).array().colwise() * inv_std_.array();
    out.sample(b) = (normalized_.sample(b).array().colwise() * gamma_.value.array()).colwise() +
                    beta_.value.array();
  }
  cached_mode_ = mode;
  cached_ = true;
  return out;
}

Tensor BatchNorm1d::backward(const Tensor& grad_out) {
  require_cache(cached_, prefix_);
  require_same_shape(grad_out, normalized_, prefix_);
  const Index batch = grad_out.batch();
  const double count = double(batch * grad_out.length());

  Vector sum_g = Vector::Zero(channels_);
  Vector sum_g_xhat = Vector::Zero(channels_);
  for (Index b = 0; b < batch; ++b) {
    sum_g += grad_out.sample(b).rowwise().sum();
    sum_g_xhat += (grad_out.sample(b).array() * normalized_.sample(b).array()).rowwise().sum().matrix();
  }
  gamma_.grad += sum_g_xhat;
  beta_.grad += sum_g;

  Tensor grad_in(batch, channels_, grad_out.length());
  const Eigen::ArrayXd scale = gamma_.value.array() * inv_std_.array();
  for (Index b = 0; b < batch; ++b) {
    if (cached_mode_ == Mode::kInfer) {
      grad_in.sample(b) = grad_out.sample(b).array().colwise() * scale;
    } else {
      // dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))
      auto centered = (grad_out.sample(b).array().colwise() - sum_g.array() / count) -
                      normalized_.sample(b).array().colwise() * (sum_g_xhat.array() / count);
      grad_in.sample(b) = centered.colwise() * scale;
    }
  }
  cached_ = false;
  return grad_in;
}

// -------------------------------------------------------------------- Relu

Tensor Relu::forward(const Tensor& x, Mode) {
  input_ = x;
  cached_ = true;
  Tensor out = x;
  out.data() = x.data().cwiseMax(0.0);
  return out;
}

Tensor Relu::backward(const Tensor& grad_out) {
  require_cache(cached_, name_);
  require_same_shape(grad_out, input_, name_);
  Tensor grad_in = grad_out;
  grad_in.data() = (input_.data().array() > 0.0).select(grad_out.data(), 0.0);
  cached_ = false;
  return grad_in;
}

// ----------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, Mode) {
  if (x.length() < 1) throw ShapeError("gap: empty time axis");
  length_ = x.length();
  cached_ = true;
  Tensor out(x.batch(), x.channels(), 1);
  out.data() = x.rows().rowwise().mean();
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  require_cache(cached_, "gap");
  if (grad_out.length() != 1) throw ShapeError("gap: gradient must have unit time axis");
  Tensor grad_in(grad_out.batch(), grad_out.channels(), length_);
  grad_in.rows() = (grad_out.data() / double(length_)).replicate(1, length_);
  cached_ = false;
  return grad_in;
}

// ------------------------------------------------------------------- Dense

Dense::Dense(Index in_features, Index out_features, std::string prefix)
    : in_features_(in_features), out_features_(out_features), prefix_(std::move(prefix)),
      weight_(prefix_ + ".weight", {out_features, in_features},
              Vector::Zero(out_features * in_features)),
      bias_(prefix_ + ".bias", {out_features}, Vector::Zero(out_features)) {
  if (in_features < 1 || out_features < 1)
    throw std::invalid_argument(prefix_ + ": feature counts must be positive");
}

void Dense::initialize(std::mt19937_64& rng) {
  weight_.value = glorot_uniform(weight_.value.size(), double(in_features_),
                                 double(out_features_), rng);
  bias_.value.setZero();
}

Tensor Dense::forward(const Tensor& x, Mode) {
  if (x.channels() != in_features_ || x.length() != 1)
    throw ShapeError(prefix_ + ": expected input [B, " + std::to_string(in_features_) +
                     ", 1], got " + x.shape_string());
  input_ = Eigen::Map<const RowMatrix>(x.data().data(), x.batch(), in_features_);
  cached_ = true;
  Eigen::Map<const RowMatrix> w(weight_.value.data(), out_features_, in_features_);
  Tensor out(x.batch(), out_features_, 1);
  Eigen::Map<RowMatrix> y(out.data().data(), x.batch(), out_features_);
  y.noalias() = input_ * w.transpose();
  y.rowwise() += bias_.value.transpose();
  return out;
}

Tensor Dense::backward(const Tensor& grad_out) {
  require_cache(cached_, prefix_);
  if (grad_out.batch() != input_.rows() || grad_out.channels() != out_features_ ||
      grad_out.length() != 1)
    throw ShapeError(prefix_ + ": gradient shape " + grad_out.shape_string() +
                     " does not match the forward output");
  Eigen::Map<const RowMatrix> g(grad_out.data().data(), grad_out.batch(), out_features_);
  Eigen::Map<RowMatrix> grad_w(weight_.grad.data(), out_features_, in_features_);
  grad_w.noalias() += g.transpose() * input_;
  bias_.grad += g.colwise().sum().transpose();

  Eigen::Map<const RowMatrix> w(weight_.value.data(), out_features_, in_features_);
  Tensor grad_in(grad_out.batch(), in_features_, 1);
  Eigen::Map<RowMatrix>(grad_in.data().data(), grad_out.batch(), in_features_).noalias() = g * w;
  cached_ = false;
  return grad_in;
}

// ------------------------------------------------------------------- Losses

Matrix softmax(const Eigen::Ref<const Matrix>& logits) {
  Matrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Matrix e = shifted.array().exp();
  return e.array().colwise() / e.rowwise().sum().array();
}

LossAndGrad softmax_xent(const Eigen::Ref<const Matrix>& logits, std::span<const int> labels) {
  const Index batch = logits.rows();
  const Index classes = logits.cols();
  if (static_cast<Index>(labels.size()) != batch)
    throw ShapeError("softmax_xent: " + std::to_string(labels.size()) + " labels for a batch of " +
                     std::to_string(batch));
  if (batch == 0) throw std::invalid_argument("softmax_xent: empty batch");
  for (int label : labels)
    if (label < 0 || label >= classes)
      throw std::invalid_argument("softmax_xent: label " + std::to_string(label) +
                                  " outside [0, " + std::to_string(classes) + ")");

  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  Matrix shifted = logits.colwise() - row_max;
  const Eigen::VectorXd log_norm = shifted.array().exp().rowwise().sum().log();

  LossAndGrad result{0.0, Matrix(batch, classes)};
  for (Index b = 0; b < batch; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    result.loss += log_norm[b] - shifted(b, y);
    result.grad.row(b) = (shifted.row(b).array() - log_norm[b]).exp();
    result.grad(b, y) -= 1.0;
  }
  result.loss /= double(batch);
  result.grad /= double(batch);
  return result;
}

}  // namespace ssam
