#include "ssam/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace ssam {

void ModelConfig::validate() const {
  if (input_length < 1) throw std::invalid_argument("model: input_length must be positive");
  if (num_classes < 1) throw std::invalid_argument("model: num_classes must be positive");
  if (kernel_sizes.size() != 2 || channels.size() != 2)
    throw std::invalid_argument("model: expected exactly two conv blocks");
  for (std::size_t i = 0; i < 2; ++i)
    if (kernel_sizes[i] < 1 || channels[i] < 1)
      throw std::invalid_argument("model: kernel sizes and channels must be positive");
  if (with_ssam) {
    if (segments < 1) throw std::invalid_argument("model: K must be at least 1");
    if (input_length / segments < 2)
      throw std::invalid_argument("model: input_length / K must be at least 2");
  }
}

Network::Network(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Index in_channels = 1;
  if (cfg_.with_ssam) {
    auto ssam = std::make_unique<SsamLayer>(cfg_.input_length, cfg_.segments);
    ssam_ = ssam.get();
    in_channels = cfg_.segments;
    layers_.push_back(std::move(ssam));
  }
  for (std::size_t i = 0; i < 2; ++i) {
    const std::string block = std::to_string(i + 1);
    layers_.push_back(std::make_unique<Conv1d>(in_channels, cfg_.channels[i], cfg_.kernel_sizes[i],
                                               "conv" + block));
    layers_.push_back(std::make_unique<BatchNorm1d>(cfg_.channels[i], "bn" + block));
    layers_.push_back(std::make_unique<Relu>("relu" + block));
    in_channels = cfg_.channels[i];
  }
  layers_.push_back(std::make_unique<GlobalAvgPool>());
  layers_.push_back(std::make_unique<Dense>(in_channels, cfg_.num_classes, "dense"));
}

Matrix Network::forward(const Tensor& batch, Mode mode) {
  if (batch.channels() != 1 || batch.length() != cfg_.input_length)
    throw ShapeError("network: expected input [B, 1, " + std::to_string(cfg_.input_length) +
                     "], got " + batch.shape_string());
  Tensor h = batch;
  for (auto& layer : layers_) h = layer->forward(h, mode);
  logits_ = Eigen::Map<const RowMatrix>(h.data().data(), h.batch(), h.channels());
  has_logits_ = true;
  return logits_;
}

double Network::backward(std::span<const int> labels) {
  if (!has_logits_) throw StateError("network: backward called without a preceding forward");
  LossAndGrad head = softmax_xent(logits_, labels);
  Tensor g(head.grad.rows(), head.grad.cols(), 1);
  Eigen::Map<RowMatrix>(g.data().data(), head.grad.rows(), head.grad.cols()) = head.grad;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  has_logits_ = false;
  return head.loss;
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> params;
  for (auto& layer : layers_)
    for (Parameter* p : layer->parameters()) params.push_back(p);
  return params;
}

Parameter& Network::parameter(const std::string& name) {
  for (Parameter* p : parameters())
    if (p->name == name) return *p;
  throw std::out_of_range("network: no parameter named " + name);
}

Index Network::parameter_count() {
  Index count = 0;
  for (Parameter* p : parameters()) count += p->value.size();
  return count;
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

NetworkState Network::state() {
  NetworkState s;
  for (Parameter* p : parameters()) s[p->name] = p->value;
  for (auto& layer : layers_)
    for (const Buffer& b : layer->buffers()) s[b.name] = *b.value;
  return s;
}

void Network::load_state(const NetworkState& state) {
  auto assign = [&](const std::string& name, Vector& target) {
    auto it = state.find(name);
    if (it == state.end()) throw std::invalid_argument("network state is missing " + name);
    if (it->second.size() != target.size())
      throw ShapeError("network state entry " + name + " has " + std::to_string(it->second.size()) +
                       " values, expected " + std::to_string(target.size()));
    target = it->second;
  };
  for (Parameter* p : parameters()) assign(p->name, p->value);
  for (auto& layer : layers_)
    for (const Buffer& b : layer->buffers()) assign(b.name, *b.value);
}

void Network::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& layer : layers_) {
    if (auto* conv = dynamic_cast<Conv1d*>(layer.get())) conv->initialize(rng);
    if (auto* dense = dynamic_cast<Dense*>(layer.get())) dense->initialize(rng);
  }
  zero_grad();
}

Network build_ssam_cnn(const ModelConfig& cfg, std::uint64_t seed) {
  Network net(cfg);
  net.initialize(seed);
  return net;
}

void sgd_step(Network& net, double lr, double l1_coeff) {
  const auto params = net.parameters();
  for (const Parameter* p : params)
    if (!p->grad.allFinite())
      throw DivergenceError("non-finite gradient in parameter " + p->name);
  for (Parameter* p : params) {
    if (p->l1_regularized && l1_coeff != 0.0) {
      const Vector sign = p->value.unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
      p->value -= lr * p->grad + (lr * l1_coeff) * sign;
    } else {
      p->value -= lr * p->grad;
    }
    p->zero_grad();
  }
}

std::vector<Vector> masks(const Network& net) {
  std::vector<Vector> out;
  if (const SsamLayer* ssam = net.ssam())
    for (Index i = 0; i < ssam->segments(); ++i) out.push_back(ssam->segment(i).mask().value);
  return out;
}

// ------------------------------------------------------------- checkpoints

namespace {

using nlohmann::json;

json config_to_json(const ModelConfig& cfg) {
  return {{"input_length", cfg.input_length}, {"num_classes", cfg.num_classes},
          {"K", cfg.segments},                {"kernel_sizes", cfg.kernel_sizes},
          {"channels", cfg.channels},         {"with_ssam", cfg.with_ssam}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.input_length = j.at("input_length").get<Index>();
  cfg.num_classes = j.at("num_classes").get<Index>();
  cfg.segments = j.at("K").get<Index>();
  cfg.kernel_sizes = j.at("kernel_sizes").get<std::vector<Index>>();
  cfg.channels = j.at("channels").get<std::vector<Index>>();
  cfg.with_ssam = j.at("with_ssam").get<bool>();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Network& net,
                     const std::map<std::string, std::string>& metadata) {
  json tensors = json::object();
  for (const auto& [name, value] : net.state())
    tensors[name] = std::vector<double>(value.data(), value.data() + value.size());
  json doc = {{"format", "ssam-checkpoint"},
              {"version", kCheckpointVersion},
              {"config", config_to_json(net.config())},
              {"metadata", metadata},
              {"tensors", tensors}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what(), 0);
  }
  if (doc.value("format", "") != "ssam-checkpoint")
    throw ParseError("checkpoint " + path.string() + ": not an ssam checkpoint", 0);
  if (doc.value("version", 0) != kCheckpointVersion)
    throw ParseError("checkpoint " + path.string() + ": unsupported version", 0);
  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(doc.at("config"));
    ckpt.metadata = doc.value("metadata", std::map<std::string, std::string>{});
    for (const auto& [name, values] : doc.at("tensors").items()) {
      const auto v = values.get<std::vector<double>>();
      ckpt.state[name] = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
    }
  } catch (const json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what(), 0);
  }
  return ckpt;
}

Network load_network(const Checkpoint& ckpt) {
  Network net(ckpt.config);
  net.load_state(ckpt.state);
  return net;
}

}  // namespace ssam
