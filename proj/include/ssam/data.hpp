#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssam/tensor.hpp"

namespace ssam {

/// Univariate labelled series, one per row of `series`.
struct LabeledDataset {
  RowMatrix series;         // [M, n]
  std::vector<int> labels;  // [M], each in [0, class_count)
  int class_count = 0;
  std::string name;

  Index size() const { return series.rows(); }
  Index length() const { return series.cols(); }
  /// Throws std::invalid_argument if labels, shape or values are inconsistent.
  void validate() const;
};

/// Frequency pair (f1, f2) per class: row = cos(2 pi f1 t / n) + cos(2 pi f2 t / n).
using FrequencyTable = std::vector<std::pair<double, double>>;

/// (1,5), (1,20), (1,80). At t = 1..100 the last two classes alias onto each
/// other, so this table is only separable in two of its three classes.
FrequencyTable literal_frequencies();
/// (1,5), (1,20), (1,40): the same construction with the aliasing removed.
FrequencyTable well_posed_frequencies();

struct SyntheticOptions {
  Index n_per_class = 2000;
  Index length = 100;
  double sigma = 2.0;
  FrequencyTable freqs = literal_frequencies();
  std::uint64_t seed = 0;
};

/// Rows are grouped by class; noise is i.i.d. N(0, sigma^2) with t = 1..length.
LabeledDataset gen_synthetic(const SyntheticOptions& opts);

struct PhaseOptions {
  Index n_per_class = 300;
  Index length = 128;
  double sigma = 0.5;
  double low_cycles = 2.0;    // cycles per half
  double high_cycles = 16.0;  // cycles per half
  std::uint64_t seed = 0;
};

/// Two classes with identical frequency content but opposite order: class 0
/// is [low | high], class 1 is [high | low]. Each half is symmetric about
/// its centre, so class 1 is class 0 reversed in time.
LabeledDataset gen_phase_dataset(const PhaseOptions& opts);

/// Reads "label<sep>v1<sep>v2..." lines, sep auto-detected (comma or tab) from
/// the first line. Labels are remapped to 0..C-1 in sorted numeric order.
LabeledDataset load_ucr(const std::filesystem::path& path);
/// Inverse of load_ucr (labels written as 0..C-1, comma separated).
void write_ucr(const LabeledDataset& ds, const std::filesystem::path& path);

/// Per-series (x - mean) / std with biased std floored at 1e-8.
LabeledDataset znormalize(const LabeledDataset& ds);

/// Adds N(0, (sigma_rel * s)^2) to every sample, s the global biased std.
LabeledDataset add_noise(const LabeledDataset& ds, double sigma_rel, std::uint64_t seed);

/// Rows `indices` of `ds` as a new dataset.
LabeledDataset subset(const LabeledDataset& ds, std::span<const Index> indices);

/// Disjoint stratified train/validation/test partition in 6:2:2 proportion.
struct SplitSpec {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
  std::uint64_t seed = 0;
};

SplitSpec split(const LabeledDataset& ds, std::uint64_t seed);

struct Batch {
  Tensor x;  // [B, 1, n]
  std::vector<int> labels;
};

Batch make_batch(const LabeledDataset& ds, std::span<const Index> indices);

/// Shuffled mini-batches over a fixed index set. Each epoch draws its
/// permutation from (seed, epoch), so epochs are independent and
/// reproducible; the last partial batch is kept.
class BatchSampler {
 public:
  BatchSampler(std::vector<Index> indices, Index batch_size, std::uint64_t seed);

  std::vector<std::vector<Index>> epoch(std::uint64_t epoch_index) const;
  Index batches_per_epoch() const;

 private:
  std::vector<Index> indices_;
  Index batch_size_;
  std::uint64_t seed_;
};

/// 64-bit seed derived from a base seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace ssam
