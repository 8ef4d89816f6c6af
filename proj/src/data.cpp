#include "ssam/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ssam/errors.hpp"

namespace ssam {

void LabeledDataset::validate() const {
  if (static_cast<Index>(labels.size()) != series.rows())
    throw std::invalid_argument("dataset " + name + ": label count does not match row count");
  for (int y : labels)
    if (y < 0 || y >= class_count)
      throw std::invalid_argument("dataset " + name + ": label out of range");
  if (!series.allFinite()) throw std::invalid_argument("dataset " + name + ": non-finite value");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over a combined key
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------- synthetic

FrequencyTable literal_frequencies() { return {{1, 5}, {1, 20}, {1, 80}}; }
FrequencyTable well_posed_frequencies() { return {{1, 5}, {1, 20}, {1, 40}}; }

LabeledDataset gen_synthetic(const SyntheticOptions& opts) {
  if (opts.sigma < 0 || !std::isfinite(opts.sigma))
    throw std::invalid_argument("gen_synthetic: sigma must be a finite non-negative number");
  if (opts.length < 2) throw std::invalid_argument("gen_synthetic: length must be at least 2");
  if (opts.n_per_class < 1 || opts.freqs.empty())
    throw std::invalid_argument("gen_synthetic: need at least one class and one series per class");

  const Index classes = static_cast<Index>(opts.freqs.size());
  const double n = double(opts.length);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  LabeledDataset ds;
  ds.name = "synthetic";
  ds.class_count = static_cast<int>(classes);
  ds.series.resize(classes * opts.n_per_class, opts.length);
  ds.labels.reserve(static_cast<std::size_t>(ds.series.rows()));

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Index row = 0;
  for (Index c = 0; c < classes; ++c) {
    const auto [f1, f2] = opts.freqs[static_cast<std::size_t>(c)];
    Vector clean(opts.length);
    for (Index i = 0; i < opts.length; ++i) {
      const double t = double(i + 1);
      clean[i] = std::cos(two_pi * f1 * t / n) + std::cos(two_pi * f2 * t / n);
    }
    for (Index r = 0; r < opts.n_per_class; ++r, ++row) {
      for (Index i = 0; i < opts.length; ++i) ds.series(row, i) = clean[i] + opts.sigma * noise(rng);
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

LabeledDataset gen_phase_dataset(const PhaseOptions& opts) {
  if (opts.sigma < 0 || !std::isfinite(opts.sigma))
    throw std::invalid_argument("gen_phase_dataset: sigma must be a finite non-negative number");
  if (opts.length < 4 || opts.length % 2 != 0)
    throw std::invalid_argument("gen_phase_dataset: length must be even and at least 4");
  if (opts.n_per_class < 1) throw std::invalid_argument("gen_phase_dataset: n_per_class must be positive");

  const Index half = opts.length / 2;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  auto tone = [&](double cycles) {
    Vector v(half);
    for (Index t = 0; t < half; ++t)
      v[t] = std::cos(two_pi * cycles * (double(t) + 0.5 - double(half) / 2.0) / double(half));
    return v;
  };
  const Vector low = tone(opts.low_cycles);
  const Vector high = tone(opts.high_cycles);
  Vector a(opts.length), b(opts.length);
  a << low, high;
  b << high, low;

  LabeledDataset ds;
  ds.name = "phase";
  ds.class_count = 2;
  ds.series.resize(2 * opts.n_per_class, opts.length);
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Index row = 0;
  for (int c = 0; c < 2; ++c) {
    const Vector& clean = c == 0 ? a : b;
    for (Index r = 0; r < opts.n_per_class; ++r, ++row) {
      for (Index i = 0; i < opts.length; ++i) ds.series(row, i) = clean[i] + opts.sigma * noise(rng);
      ds.labels.push_back(c);
    }
  }
  return ds;
}

// ---------------------------------------------------------------- UCR files

namespace {

double parse_number(std::string_view field, std::size_t line_no) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\r')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    throw ParseError("line " + std::to_string(line_no) + ": non-numeric field '" +
                         std::string(field) + "'",
                     line_no);
  return value;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

}  // namespace

LabeledDataset load_ucr(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::vector<double> raw_labels;
  std::vector<std::vector<double>> rows;
  char sep = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (sep == 0) sep = line.find('\t') != std::string::npos ? '\t' : ',';
    const auto fields = split_fields(line, sep);
    if (fields.size() < 2)
      throw ParseError("line " + std::to_string(line_no) + ": expected a label and at least one value",
                       line_no);
    std::vector<double> values;
    values.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) values.push_back(parse_number(fields[i], line_no));
    if (!rows.empty() && values.size() != rows.front().size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(rows.front().size()) + " values, found " +
                           std::to_string(values.size()),
                       line_no);
    raw_labels.push_back(parse_number(fields[0], line_no));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw ParseError(path.string() + ": no data rows", 0);

  std::vector<double> distinct = raw_labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  LabeledDataset ds;
  ds.name = path.stem().string();
  ds.class_count = static_cast<int>(distinct.size());
  ds.series.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ds.series.row(static_cast<Index>(r)) =
        Eigen::Map<const Vector>(rows[r].data(), static_cast<Index>(rows[r].size())).transpose();
    const auto it = std::lower_bound(distinct.begin(), distinct.end(), raw_labels[r]);
    ds.labels.push_back(static_cast<int>(it - distinct.begin()));
  }
  if (!ds.series.allFinite()) throw ParseError(path.string() + ": non-finite value", 0);
  return ds;
}

void write_ucr(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[64];
  std::string line;
  for (Index r = 0; r < ds.size(); ++r) {
    line = std::to_string(ds.labels[static_cast<std::size_t>(r)]);
    for (Index i = 0; i < ds.length(); ++i) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), ds.series(r, i));
      line.push_back(',');
      line.append(buf, res.ptr);
    }
    line.push_back('\n');
    out << line;
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// ------------------------------------------------------------ preprocessing

LabeledDataset znormalize(const LabeledDataset& ds) {
  LabeledDataset out = ds;
  for (Index r = 0; r < out.size(); ++r) {
    auto row = out.series.row(r);
    const double mean = row.mean();
    row.array() -= mean;
    const double sd = std::sqrt(row.squaredNorm() / double(row.size()));
    row /= std::max(sd, 1e-8);
  }
  return out;
}

LabeledDataset add_noise(const LabeledDataset& ds, double sigma_rel, std::uint64_t seed) {
  if (sigma_rel < 0 || !std::isfinite(sigma_rel))
    throw std::invalid_argument("add_noise: sigma_rel must be a finite non-negative number");
  LabeledDataset out = ds;
  if (sigma_rel == 0.0 || ds.series.size() == 0) return out;
  const double mean = ds.series.mean();
  const double sd = std::sqrt((ds.series.array() - mean).square().mean());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma_rel * sd);
  for (Index r = 0; r < out.size(); ++r)
    for (Index i = 0; i < out.length(); ++i) out.series(r, i) += noise(rng);
  return out;
}

LabeledDataset subset(const LabeledDataset& ds, std::span<const Index> indices) {
  LabeledDataset out;
  out.name = ds.name;
  out.class_count = ds.class_count;
  out.series.resize(static_cast<Index>(indices.size()), ds.length());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.series.row(static_cast<Index>(i)) = ds.series.row(indices[i]);
    out.labels.push_back(ds.labels[static_cast<std::size_t>(indices[i])]);
  }
  return out;
}

SplitSpec split(const LabeledDataset& ds, std::uint64_t seed) {
  std::map<int, std::vector<Index>> by_class;
  for (Index i = 0; i < ds.size(); ++i) by_class[ds.labels[static_cast<std::size_t>(i)]].push_back(i);

  SplitSpec spec;
  spec.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto count = static_cast<Index>(members.size());
    const auto n_train = static_cast<Index>(std::llround(0.6 * double(count)));
    const auto n_val = std::min<Index>(count - n_train, static_cast<Index>(std::llround(0.2 * double(count))));
    spec.train.insert(spec.train.end(), members.begin(), members.begin() + n_train);
    spec.val.insert(spec.val.end(), members.begin() + n_train, members.begin() + n_train + n_val);
    spec.test.insert(spec.test.end(), members.begin() + n_train + n_val, members.end());
  }
  std::sort(spec.train.begin(), spec.train.end());
  std::sort(spec.val.begin(), spec.val.end());
  std::sort(spec.test.begin(), spec.test.end());
  return spec;
}

// ---------------------------------------------------------------- batching

Batch make_batch(const LabeledDataset& ds, std::span<const Index> indices) {
  Batch batch{Tensor(static_cast<Index>(indices.size()), 1, ds.length()), {}};
  batch.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    batch.x.rows().row(static_cast<Index>(i)) = ds.series.row(indices[i]);
    batch.labels.push_back(ds.labels[static_cast<std::size_t>(indices[i])]);
  }
  return batch;
}

BatchSampler::BatchSampler(std::vector<Index> indices, Index batch_size, std::uint64_t seed)
    : indices_(std::move(indices)), batch_size_(batch_size), seed_(seed) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
}

Index BatchSampler::batches_per_epoch() const {
  return (static_cast<Index>(indices_.size()) + batch_size_ - 1) / batch_size_;
}

std::vector<std::vector<Index>> BatchSampler::epoch(std::uint64_t epoch_index) const {
  std::vector<Index> order = indices_;
  std::mt19937_64 rng(derive_seed(seed_, epoch_index));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Index>> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size_)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size_));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace ssam
