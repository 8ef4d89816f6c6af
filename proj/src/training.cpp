#include "ssam/training.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace ssam {

void TrainConfig::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw std::invalid_argument("train: lr must be positive");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be at least 1");
  if (l1_coeff < 0) throw std::invalid_argument("train: l1_coeff must be non-negative");
  if (k_min < 1 || k_min > k_max) throw std::invalid_argument("train: need 1 <= k_min <= k_max");
  if (search_epochs < 1) throw std::invalid_argument("train: search_epochs must be at least 1");
}

namespace {

Index count_correct(const Matrix& logits, std::span<const int> labels) {
  Index correct = 0;
  for (Index b = 0; b < logits.rows(); ++b) {
    Index arg = 0;
    logits.row(b).maxCoeff(&arg);
    correct += arg == labels[static_cast<std::size_t>(b)];
  }
  return correct;
}

}  // namespace

Evaluation evaluate(Network& net, const LabeledDataset& ds, std::span<const Index> indices,
                    Index batch_size) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty index set");
  if (ds.length() != net.config().input_length)
    throw ShapeError("evaluate: series length " + std::to_string(ds.length()) +
                     " does not match model input length " +
                     std::to_string(net.config().input_length));
  double loss_sum = 0;
  Index correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto chunk = indices.subspan(
        start, std::min(indices.size() - start, static_cast<std::size_t>(batch_size)));
    Batch batch = make_batch(ds, chunk);
    const Matrix logits = net.forward(batch.x, Mode::kInfer);
    loss_sum += softmax_xent(logits, batch.labels).loss * double(chunk.size());
    correct += count_correct(logits, batch.labels);
  }
  const double n = double(indices.size());
  return {loss_sum / n, double(correct) / n};
}

TrainHistory train(Network& net, const LabeledDataset& ds, const SplitSpec& split,
                   const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (ds.length() != net.config().input_length)
    throw ShapeError("train: series length " + std::to_string(ds.length()) +
                     " does not match model input length " +
                     std::to_string(net.config().input_length));
  if (split.train.empty() || split.val.empty())
    throw std::invalid_argument("train: train and validation partitions must be non-empty");

  const BatchSampler sampler(split.train, cfg.batch_size, derive_seed(cfg.seed, 0xba7c4));
  TrainHistory history;
  double best_val = std::numeric_limits<double>::infinity();
  net.zero_grad();

  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0;
    Index correct = 0;
    for (const auto& indices : sampler.epoch(static_cast<std::uint64_t>(epoch))) {
      Batch batch = make_batch(ds, indices);
      const Matrix logits = net.forward(batch.x, Mode::kTrain);
      const double loss = net.backward(batch.labels);
      if (!std::isfinite(loss))
        throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      sgd_step(net, cfg.lr, cfg.l1_coeff);
      ++history.sgd_steps;
      loss_sum += loss * double(indices.size());
      correct += count_correct(logits, batch.labels);
    }
    const double n_train = double(split.train.size());
    const Evaluation val = evaluate(net, ds, split.val);
    if (!std::isfinite(val.loss))
      throw DivergenceError("training diverged: non-finite validation loss at epoch " +
                            std::to_string(epoch));
    EpochRecord record{epoch, loss_sum / n_train, double(correct) / n_train, val.loss, val.accuracy};
    history.epochs.push_back(record);
    if (val.loss < best_val) {
      best_val = val.loss;
      history.best_epoch = epoch;
      history.best_checkpoint = net.state();
    }
    if (on_epoch) on_epoch(record);
  }
  net.load_state(history.best_checkpoint);
  return history;
}

std::uint64_t candidate_seed(std::uint64_t master, Index k) {
  return derive_seed(master + static_cast<std::uint64_t>(k), 0x6b5eed);
}

KSearchResult search_k(const LabeledDataset& ds, const SplitSpec& split, const TrainConfig& cfg,
                       const ModelConfig& base) {
  cfg.validate();
  KSearchResult result;
  double best = std::numeric_limits<double>::infinity();
  for (Index k = cfg.k_min; k <= cfg.k_max; ++k) {
    if (ds.length() / k < 2) continue;
    ModelConfig mc = base;
    mc.input_length = ds.length();
    mc.num_classes = ds.class_count;
    mc.segments = k;
    mc.with_ssam = true;
    TrainConfig tc = cfg;
    tc.epochs = cfg.search_epochs;
    tc.seed = candidate_seed(cfg.seed, k);
    Network net = build_ssam_cnn(mc, tc.seed);
    const TrainHistory h = train(net, ds, split, tc);
    const double loss = h.epochs.back().val_loss;
    result.candidates.push_back({k, loss});
    if (loss < best) {
      best = loss;
      result.best_k = k;
    }
  }
  if (result.candidates.empty())
    throw std::invalid_argument("search_k: no candidate K leaves segments of at least 2 samples");
  return result;
}

std::vector<NoisePoint> noise_sweep(
    Network& net, const LabeledDataset& raw, std::span<const Index> test_indices,
    std::span<const double> levels, std::uint64_t seed,
    const std::function<LabeledDataset(const LabeledDataset&)>& preprocess) {
  if (test_indices.empty()) throw std::invalid_argument("noise_sweep: empty index set");
  std::vector<NoisePoint> points;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const LabeledDataset noisy = add_noise(raw, levels[i], derive_seed(seed, 0x7015e + i));
    const LabeledDataset prepared = preprocess ? preprocess(noisy) : noisy;
    points.push_back({levels[i], evaluate(net, prepared, test_indices).accuracy});
  }
  return points;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

void write_history_csv(const TrainHistory& history, std::ostream& out) {
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& r : history.epochs)
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.train_acc) << ','
        << format_double(r.val_loss) << ',' << format_double(r.val_acc) << '\n';
}

void write_ksearch_csv(const KSearchResult& result, std::ostream& out) {
  out << "K,val_loss,selected\n";
  for (const auto& c : result.candidates)
    out << c.k << ',' << format_double(c.val_loss) << ',' << (c.k == result.best_k ? 1 : 0) << '\n';
}

void write_noise_csv(std::span<const NoisePoint> points, std::ostream& out) {
  out << "sigma_rel,accuracy\n";
  for (const auto& p : points) out << format_double(p.sigma_rel) << ',' << format_double(p.accuracy) << '\n';
}

}  // namespace ssam
