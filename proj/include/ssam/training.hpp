#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ssam/data.hpp"
#include "ssam/model.hpp"

namespace ssam {

struct TrainConfig {
  double lr = 0.01;
  Index epochs = 500;
  Index batch_size = 128;
  double l1_coeff = 0.01;
  std::uint64_t seed = 20210701;
  Index k_min = 1;
  Index k_max = 10;
  Index search_epochs = 5;

  void validate() const;
};

struct EpochRecord {
  Index epoch;  // 1-based
  double train_loss;
  double train_acc;
  double val_loss;
  double val_acc;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  Index best_epoch = 0;  // 1-based, 0 when empty
  NetworkState best_checkpoint;
  Index sgd_steps = 0;

  const EpochRecord& best() const { return epochs.at(static_cast<std::size_t>(best_epoch - 1)); }
};

/// Called after every epoch; lets callers log progress.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch SGD for cfg.epochs epochs. After each epoch the validation
/// partition is evaluated; the parameters are snapshotted whenever the
/// validation loss strictly improves, and the best snapshot is restored into
/// `net` before returning. A non-finite loss aborts with DivergenceError.
TrainHistory train(Network& net, const LabeledDataset& ds, const SplitSpec& split,
                   const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct Evaluation {
  double loss;
  double accuracy;
};

/// Inference-mode mean cross-entropy and accuracy on `indices`.
Evaluation evaluate(Network& net, const LabeledDataset& ds, std::span<const Index> indices,
                    Index batch_size = 512);

struct KCandidate {
  Index k;
  double val_loss;
};

struct KSearchResult {
  Index best_k = 0;
  std::vector<KCandidate> candidates;
};

/// Seed used for the fresh network of candidate K.
std::uint64_t candidate_seed(std::uint64_t master, Index k);

/// Trains a fresh SSAM-CNN for cfg.search_epochs epochs per K in
/// [k_min, k_max] (skipping K with n / K < 2) and returns the K whose
/// final-epoch validation loss is strictly smallest; ties go to the smaller K.
KSearchResult search_k(const LabeledDataset& ds, const SplitSpec& split, const TrainConfig& cfg,
                       const ModelConfig& base = {});

struct NoisePoint {
  double sigma_rel;
  double accuracy;
};

/// Accuracy on the test indices of copies of `raw` with added white noise,
/// one fresh noise draw per level. Each noisy copy passes through
/// `preprocess` (z-normalization by default) before evaluation, so level 0
/// reproduces the plain pipeline.
std::vector<NoisePoint> noise_sweep(
    Network& net, const LabeledDataset& raw, std::span<const Index> test_indices,
    std::span<const double> levels, std::uint64_t seed,
    const std::function<LabeledDataset(const LabeledDataset&)>& preprocess = znormalize);

void write_history_csv(const TrainHistory& history, std::ostream& out);
void write_ksearch_csv(const KSearchResult& result, std::ostream& out);
void write_noise_csv(std::span<const NoisePoint> points, std::ostream& out);

/// Shortest round-trip decimal form, used for every CSV/JSON number.
std::string format_double(double v);

}  // namespace ssam
