#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "ssam/model.hpp"
#include "ssam/training.hpp"

using namespace ssam;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("synth writes the default dataset") {
  TempDir tmp("ssam_cli_synth");
  const Result r = run({"synth", "--out", tmp / "s.csv"});
  REQUIRE(r.code == 0);
  const LabeledDataset ds = load_ucr(tmp / "s.csv");
  CHECK(ds.size() == 6000);
  CHECK(ds.length() == 100);
  const std::string text = slurp(tmp / "s.csv");
  const std::string first = text.substr(0, text.find('\n'));
  CHECK(std::count(first.begin(), first.end(), ',') + 1 == 101);

  REQUIRE(run({"synth", "--out", tmp / "again.csv"}).code == 0);
  CHECK(slurp(tmp / "again.csv") == text);
  REQUIRE(run({"synth", "--out", tmp / "other.csv", "--seed", "5"}).code == 0);
  CHECK(slurp(tmp / "other.csv") != text);
}

TEST_CASE("synth without noise shows the aliasing of the literal table") {
  TempDir tmp("ssam_cli_alias");
  REQUIRE(run({"synth", "--out", tmp / "a.csv", "--sigma", "0", "--freqs", "paper", "--n-per-class", "3"}).code == 0);
  const LabeledDataset ds = load_ucr(tmp / "a.csv");
  CHECK((ds.series.row(3) - ds.series.row(6)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ds.series.row(0) - ds.series.row(3)).cwiseAbs().maxCoeff() > 0.5);

  const Result bad = run({"synth", "--out", "/nonexistent-dir/x.csv", "--n-per-class", "2"});
  CHECK(bad.code == 1);
  CHECK(bad.err.rfind("error: io:", 0) == 0);
  CHECK(count_lines(bad.err) == 1);
}

TEST_CASE("train, eval, noise-sweep and export-mask") {
  TempDir tmp("ssam_cli_train");
  REQUIRE(run({"synth", "--out", tmp / "d.csv", "--n-per-class", "30", "--freqs", "well-posed"}).code == 0);

  const Result tr = run({"train", "--data", tmp / "d.csv", "--out", tmp / "run", "--epochs", "1", "--k", "2", "--quiet"});
  REQUIRE_MESSAGE(tr.code == 0, tr.err);
  const std::string history = slurp(tmp / "run/history.csv");
  CHECK(count_lines(history) == 2);
  CHECK(history.rfind("epoch,train_loss,train_acc,val_loss,val_acc\n", 0) == 0);

  const auto manifest = nlohmann::json::parse(slurp(tmp / "run/manifest.json"));
  CHECK(manifest.at("seed").get<unsigned long long>() == cli::kDefaultSeed);
  CHECK(manifest.at("dataset_fingerprint") == cli::file_fingerprint(tmp / "d.csv"));
  for (const auto& f : manifest.at("outputs")) CHECK(fs::exists(tmp.path / "run" / f.get<std::string>()));

  const auto mask = nlohmann::json::parse(slurp(tmp / "run/mask.json"));
  CHECK(mask.at("K") == 2);
  CHECK(mask.at("T_seg") == 50);
  CHECK(mask.at("masks").size() == 2);
  CHECK(mask.at("masks")[1].size() == 50);

  const auto metrics = nlohmann::json::parse(slurp(tmp / "run/metrics.json"));
  CHECK(metrics.at("K") == 2);

  const Result ev = run({"eval", "--checkpoint", tmp / "run/checkpoint.json", "--data", tmp / "d.csv"});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  const auto printed = nlohmann::json::parse(ev.out);
  CHECK(printed.at("accuracy") == metrics.at("accuracy"));
  CHECK(printed.at("loss") == metrics.at("loss"));

  const Result ns = run({"noise-sweep", "--checkpoint", tmp / "run/checkpoint.json", "--data", tmp / "d.csv",
                         "--levels", "0,0.5", "--out", tmp / "noise.csv"});
  REQUIRE_MESSAGE(ns.code == 0, ns.err);
  const std::string noise = slurp(tmp / "noise.csv");
  CHECK(noise.rfind("sigma_rel,accuracy\n0," + format_double(printed.at("accuracy").get<double>()) + "\n", 0) == 0);
  CHECK(count_lines(noise) == 3);

  REQUIRE(run({"export-mask", "--checkpoint", tmp / "run/checkpoint.json", "--out", tmp / "m.json"}).code == 0);
  CHECK(slurp(tmp / "m.json") == slurp(tmp / "run/mask.json"));

  // A second identical run reproduces every table byte for byte.
  REQUIRE(run({"train", "--data", tmp / "d.csv", "--out", tmp / "run2", "--epochs", "1", "--k", "2", "--quiet"}).code == 0);
  for (const char* f : {"history.csv", "metrics.json", "mask.json", "checkpoint.json"})
    CHECK(slurp(tmp.path / "run" / f) == slurp(tmp.path / "run2" / f));

  const Result base = run({"train", "--data", tmp / "d.csv", "--out", tmp / "base", "--epochs", "1", "--no-ssam", "--quiet"});
  REQUIRE(base.code == 0);
  CHECK(!fs::exists(tmp.path / "base/mask.json"));
  CHECK(nlohmann::json::parse(slurp(tmp / "base/metrics.json")).at("K").is_null());
  const Result no_mask = run({"export-mask", "--checkpoint", tmp / "base/checkpoint.json", "--out", tmp / "x.json"});
  CHECK(no_mask.code == 1);
  CHECK(no_mask.err.rfind("error: validation:", 0) == 0);
}

TEST_CASE("export-mask of an untrained model is all ones") {
  TempDir tmp("ssam_cli_mask");
  ModelConfig cfg;
  cfg.input_length = 60;
  cfg.num_classes = 6;
  cfg.segments = 3;
  Network net = build_ssam_cnn(cfg, 1);
  save_checkpoint(tmp / "c.json", net);
  REQUIRE(run({"export-mask", "--checkpoint", tmp / "c.json", "--out", tmp / "m.json"}).code == 0);
  const auto mask = nlohmann::json::parse(slurp(tmp / "m.json"));
  CHECK(mask.at("K") == 3);
  CHECK(mask.at("T_seg") == 20);
  for (const auto& m : mask.at("masks"))
    for (const auto& v : m) CHECK(v.get<double>() == 1.0);
}

TEST_CASE("command errors are single machine-parsable lines") {
  TempDir tmp("ssam_cli_errors");
  REQUIRE(run({"synth", "--out", tmp / "d.csv", "--n-per-class", "10"}).code == 0);

  const Result both = run({"train", "--data", tmp / "d.csv", "--out", tmp / "o", "--k", "2", "--search-k"});
  CHECK(both.code == 2);
  CHECK(both.err.rfind("error: usage:", 0) == 0);
  CHECK(count_lines(both.err) == 1);

  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"--help"}).code == 0);

  ModelConfig cfg;
  cfg.input_length = 50;
  cfg.num_classes = 3;
  Network net = build_ssam_cnn(cfg, 1);
  save_checkpoint(tmp / "c.json", net);
  const Result mismatch = run({"eval", "--checkpoint", tmp / "c.json", "--data", tmp / "d.csv"});
  CHECK(mismatch.code == 1);
  CHECK(mismatch.err.rfind("error: validation:", 0) == 0);

  std::ofstream(tmp / "ragged.csv") << "1,2,3\n2,3\n";
  const Result ragged = run({"train", "--data", tmp / "ragged.csv", "--out", tmp / "o"});
  CHECK(ragged.code == 1);
  CHECK(ragged.err.rfind("error: parse: line 2", 0) == 0);

  const Result levels = run({"noise-sweep", "--checkpoint", tmp / "c.json", "--data", tmp / "d.csv",
                             "--levels", "0,abc", "--out", tmp / "n.csv"});
  CHECK(levels.code == 2);

  const Result epochs = run({"train", "--data", tmp / "d.csv", "--out", tmp / "o", "--epochs", "0"});
  CHECK(epochs.code == 1);
  CHECK(epochs.err.rfind("error: invalid-argument:", 0) == 0);
}

TEST_CASE("dataset fingerprint tracks content") {
  TempDir tmp("ssam_cli_fp");
  std::ofstream(tmp / "a.csv") << "1,0.5,1\n";
  std::ofstream(tmp / "b.csv") << "1,0.5,1\n";
  std::ofstream(tmp / "c.csv") << "1,0.5,2\n";
  CHECK(cli::file_fingerprint(tmp / "a.csv") == cli::file_fingerprint(tmp / "b.csv"));
  CHECK(cli::file_fingerprint(tmp / "a.csv") != cli::file_fingerprint(tmp / "c.csv"));
  CHECK(cli::file_fingerprint(tmp / "a.csv").size() == 64);
}
