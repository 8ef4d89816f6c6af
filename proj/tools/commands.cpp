#include "commands.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssam/training.hpp"

namespace ssam::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Failure reported as "error: <kind>: <message>".
struct CommandError : std::runtime_error {
  CommandError(std::string k, const std::string& message)
      : std::runtime_error(message), kind(std::move(k)) {}
  std::string kind;
};

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CommandError("io", "cannot write " + path.string());
  out << text;
  if (!out) throw CommandError("io", "failed writing " + path.string());
}

/// Writes via a temporary sibling and rename, so readers never see a
/// partial file.
void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  write_text(tmp, text);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw CommandError("io", "cannot move " + tmp.string() + " into place: " + ec.message());
}

json mask_json(const Network& net) {
  const SsamLayer* ssam = net.ssam();
  if (!ssam) throw CommandError("validation", "model was built without SSAM; it has no mask");
  json masks_out = json::array();
  for (const Vector& m : masks(net)) masks_out.push_back(std::vector<double>(m.begin(), m.end()));
  return {{"K", ssam->segments()}, {"T_seg", ssam->segment_length()}, {"masks", masks_out}};
}

json metrics_json(const Evaluation& e, const Network& net) {
  json k = net.config().with_ssam ? json(net.config().segments) : json(nullptr);
  return {{"accuracy", e.accuracy}, {"loss", e.loss}, {"K", k}};
}

/// Dataset pipeline shared by train/eval/noise-sweep: load, z-normalize, split.
struct Prepared {
  LabeledDataset raw;
  LabeledDataset normalized;
  SplitSpec split;
};

Prepared prepare(const std::string& data_path, std::uint64_t split_seed) {
  Prepared p;
  p.raw = load_ucr(data_path);
  p.normalized = znormalize(p.raw);
  p.split = ssam::split(p.normalized, split_seed);
  if (p.split.test.empty() || p.split.val.empty() || p.split.train.empty())
    throw CommandError("validation", "dataset " + data_path + " is too small for a 6:2:2 split");
  return p;
}

struct LoadedModel {
  Checkpoint ckpt;
  std::unique_ptr<Network> net;
  std::uint64_t split_seed;
};

LoadedModel load_model(const std::string& path, std::optional<std::uint64_t> seed_override) {
  LoadedModel m{read_checkpoint(path), nullptr, kDefaultSeed};
  m.net = std::make_unique<Network>(load_network(m.ckpt));
  if (seed_override) {
    m.split_seed = *seed_override;
  } else if (auto it = m.ckpt.metadata.find("split_seed"); it != m.ckpt.metadata.end()) {
    m.split_seed = std::stoull(it->second);
  }
  return m;
}

void check_length(const Network& net, const LabeledDataset& ds) {
  if (net.config().input_length != ds.length())
    throw CommandError("validation", "checkpoint expects series of length " +
                                         std::to_string(net.config().input_length) +
                                         " but the data has length " + std::to_string(ds.length()));
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
  std::string out;
  std::string freqs = "paper";
  double sigma = 2.0;
  std::uint64_t seed = kDefaultSeed;
  Index n_per_class = 2000;
  Index length = 100;
};

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  SyntheticOptions opts;
  opts.freqs = a.freqs == "well-posed" ? well_posed_frequencies() : literal_frequencies();
  opts.sigma = a.sigma;
  opts.seed = a.seed;
  opts.n_per_class = a.n_per_class;
  opts.length = a.length;
  const LabeledDataset ds = gen_synthetic(opts);
  try {
    write_ucr(ds, a.out);
  } catch (const std::runtime_error& e) {
    throw CommandError("io", e.what());
  }
  out << "wrote " << ds.size() << " series of length " << ds.length() << " to " << a.out << '\n';
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string data;
  std::string out;
  std::optional<Index> k;
  bool search = false;
  bool no_ssam = false;
  TrainConfig cfg;
  bool quiet = false;
};

void cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out,
               std::ostream& err) {
  const std::string started = utc_timestamp();
  a.cfg.validate();
  const Prepared data = prepare(a.data, a.cfg.seed);

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec || !fs::is_directory(a.out)) throw CommandError("io", "cannot create output directory " + a.out);
  const fs::path dir(a.out);
  std::vector<std::string> outputs;

  ModelConfig mc;
  mc.input_length = data.normalized.length();
  mc.num_classes = data.normalized.class_count;
  mc.with_ssam = !a.no_ssam;
  mc.segments = a.k.value_or(1);

  std::optional<KSearchResult> search;
  if (a.search) {
    search = search_k(data.normalized, data.split, a.cfg, mc);
    mc.segments = search->best_k;
    std::ostringstream csv;
    write_ksearch_csv(*search, csv);
    write_text(dir / "ksearch.csv", csv.str());
    outputs.push_back("ksearch.csv");
    if (!a.quiet) err << "search-k selected K=" << mc.segments << '\n';
  }

  Network net = build_ssam_cnn(mc, derive_seed(a.cfg.seed, 1));
  const TrainHistory history = train(net, data.normalized, data.split, a.cfg, [&](const EpochRecord& r) {
    if (!a.quiet)
      err << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_loss " << r.val_loss
          << " val_acc " << r.val_acc << '\n';
  });

  std::ostringstream csv;
  write_history_csv(history, csv);
  write_text(dir / "history.csv", csv.str());
  outputs.push_back("history.csv");

  save_checkpoint(dir / "checkpoint.json", net, {{"split_seed", std::to_string(a.cfg.seed)}});
  outputs.push_back("checkpoint.json");

  if (mc.with_ssam) {
    write_text(dir / "mask.json", mask_json(net).dump(1) + "\n");
    outputs.push_back("mask.json");
  }

  const Evaluation test = evaluate(net, data.normalized, data.split.test);
  const json metrics = metrics_json(test, net);
  write_text(dir / "metrics.json", metrics.dump(1) + "\n");
  outputs.push_back("metrics.json");

  json config = {{"data", a.data},
                 {"K", mc.with_ssam ? json(mc.segments) : json(nullptr)},
                 {"search_k", a.search},
                 {"with_ssam", mc.with_ssam},
                 {"input_length", mc.input_length},
                 {"num_classes", mc.num_classes},
                 {"kernel_sizes", mc.kernel_sizes},
                 {"channels", mc.channels},
                 {"lr", a.cfg.lr},
                 {"l1_coeff", a.cfg.l1_coeff},
                 {"epochs", a.cfg.epochs},
                 {"batch_size", a.cfg.batch_size},
                 {"k_min", a.cfg.k_min},
                 {"k_max", a.cfg.k_max},
                 {"search_epochs", a.cfg.search_epochs},
                 {"best_epoch", history.best_epoch}};
  json manifest = {{"command", argv},
                   {"config", config},
                   {"seed", a.cfg.seed},
                   {"dataset_fingerprint", file_fingerprint(a.data)},
                   {"started", started},
                   {"finished", utc_timestamp()},
                   {"outputs", outputs}};
  write_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
  out << metrics.dump() << '\n';
}

// -------------------------------------------------------- eval and friends

void cmd_eval(const std::string& ckpt_path, const std::string& data_path,
              std::optional<std::uint64_t> seed, std::ostream& out) {
  LoadedModel m = load_model(ckpt_path, seed);
  const Prepared data = prepare(data_path, m.split_seed);
  check_length(*m.net, data.normalized);
  out << metrics_json(evaluate(*m.net, data.normalized, data.split.test), *m.net).dump() << '\n';
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> levels;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !(v >= 0)) throw std::invalid_argument(item);
      levels.push_back(v);
    } catch (const std::logic_error&) {
      throw CommandError("usage", "--levels must be a comma-separated list of non-negative numbers");
    }
  }
  if (levels.empty()) throw CommandError("usage", "--levels is empty");
  return levels;
}

void cmd_noise_sweep(const std::string& ckpt_path, const std::string& data_path,
                     const std::string& levels_text, const std::string& out_path,
                     std::optional<std::uint64_t> seed, std::uint64_t noise_seed, std::ostream& out) {
  const std::vector<double> levels = parse_levels(levels_text);
  LoadedModel m = load_model(ckpt_path, seed);
  const Prepared data = prepare(data_path, m.split_seed);
  check_length(*m.net, data.normalized);
  const auto points = noise_sweep(*m.net, data.raw, data.split.test, levels, noise_seed);
  std::ostringstream csv;
  write_noise_csv(points, csv);
  write_text(out_path, csv.str());
  out << "wrote " << points.size() << " noise levels to " << out_path << '\n';
}

void cmd_export_mask(const std::string& ckpt_path, const std::string& out_path, std::ostream& out) {
  LoadedModel m = load_model(ckpt_path, std::nullopt);
  write_text(out_path, mask_json(*m.net).dump(1) + "\n");
  out << "wrote mask to " << out_path << '\n';
}

}  // namespace

std::string file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CommandError("io", "cannot open " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spectral attention (SAM/SSAM) time-series classifier", "ssam"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate the three-class synthetic cosine dataset");
  synth_cmd->add_option("--out", synth.out, "Output file (UCR-style CSV)")->required();
  synth_cmd->add_option("--freqs", synth.freqs, "Frequency table")
      ->check(CLI::IsMember({"paper", "well-posed"}));
  synth_cmd->add_option("--sigma", synth.sigma, "Gaussian noise standard deviation");
  synth_cmd->add_option("--seed", synth.seed, "Random seed");
  synth_cmd->add_option("--n-per-class", synth.n_per_class, "Series per class");
  synth_cmd->add_option("--length", synth.length, "Series length");

  TrainArgs tr;
  tr.cfg.seed = kDefaultSeed;
  auto* train_cmd = app.add_subcommand("train", "Train SSAM-CNN (or the base CNN) on a UCR-style file");
  train_cmd->add_option("--data", tr.data, "Dataset file")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  auto* k_opt = train_cmd->add_option("--k", tr.k, "Number of SSAM segments");
  auto* search_opt = train_cmd->add_flag("--search-k", tr.search, "Pick K by short validation runs");
  auto* no_ssam_opt = train_cmd->add_flag("--no-ssam", tr.no_ssam, "Train the base CNN without SSAM");
  k_opt->excludes(search_opt);
  no_ssam_opt->excludes(k_opt)->excludes(search_opt);
  train_cmd->add_option("--epochs", tr.cfg.epochs, "Training epochs");
  train_cmd->add_option("--seed", tr.cfg.seed, "Seed for split, initialization and shuffling");
  train_cmd->add_option("--lr", tr.cfg.lr, "SGD learning rate");
  train_cmd->add_option("--l1", tr.cfg.l1_coeff, "L1 coefficient on the spectral masks");
  train_cmd->add_option("--batch-size", tr.cfg.batch_size, "Mini-batch size");
  train_cmd->add_option("--k-min", tr.cfg.k_min, "Smallest K tried by --search-k");
  train_cmd->add_option("--k-max", tr.cfg.k_max, "Largest K tried by --search-k");
  train_cmd->add_option("--search-epochs", tr.cfg.search_epochs, "Epochs per K candidate");
  train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");

  std::string ckpt, data, levels = "0,0.25,0.5,1,2", out_path;
  std::optional<std::uint64_t> seed;
  std::uint64_t noise_seed = kDefaultNoiseSeed;
  auto* eval_cmd = app.add_subcommand("eval", "Print test-split metrics of a checkpoint as JSON");
  eval_cmd->add_option("--checkpoint", ckpt)->required();
  eval_cmd->add_option("--data", data)->required();
  eval_cmd->add_option("--seed", seed, "Split seed (defaults to the one used for training)");

  auto* sweep_cmd = app.add_subcommand("noise-sweep", "Test accuracy under added white noise");
  sweep_cmd->add_option("--checkpoint", ckpt)->required();
  sweep_cmd->add_option("--data", data)->required();
  sweep_cmd->add_option("--levels", levels, "Comma-separated noise levels relative to the data std");
  sweep_cmd->add_option("--out", out_path, "Output CSV")->required();
  sweep_cmd->add_option("--seed", seed, "Split seed (defaults to the one used for training)");
  sweep_cmd->add_option("--noise-seed", noise_seed, "Seed for the noise draws");

  auto* mask_cmd = app.add_subcommand("export-mask", "Write the learned spectral masks as JSON");
  mask_cmd->add_option("--checkpoint", ckpt)->required();
  mask_cmd->add_option("--out", out_path)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  }

  std::vector<std::string> argv = {"ssam"};
  argv.insert(argv.end(), args.begin(), args.end());
  try {
    if (synth_cmd->parsed()) cmd_synth(synth, out);
    else if (train_cmd->parsed()) cmd_train(tr, argv, out, err);
    else if (eval_cmd->parsed()) cmd_eval(ckpt, data, seed, out);
    else if (sweep_cmd->parsed()) cmd_noise_sweep(ckpt, data, levels, out_path, seed, noise_seed, out);
    else if (mask_cmd->parsed()) cmd_export_mask(ckpt, out_path, out);
    return 0;
  } catch (const CommandError& e) {
    err << "error: " << e.kind << ": " << e.what() << '\n';
    return e.kind == "usage" ? 2 : 1;
  } catch (const ParseError& e) {
    err << "error: parse: " << e.what() << '\n';
  } catch (const ShapeError& e) {
    err << "error: validation: " << e.what() << '\n';
  } catch (const DivergenceError& e) {
    err << "error: divergence: " << e.what() << '\n';
  } catch (const std::invalid_argument& e) {
    err << "error: invalid-argument: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: io: " << e.what() << '\n';
  }
  return 1;
}

}  // namespace ssam::cli
