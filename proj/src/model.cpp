#include "dbkd/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dbkd/errors.hpp"
#include "dbkd/random.hpp"

namespace dbkd {

using nlohmann::json;

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv1d: return "conv1d";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::GlobalAvgPool: return "global-avg-pool";
    case LayerKind::Correlation: return "correlation";
  }
  return "unknown";
}

LayerKind parse_layer_kind(const std::string& name) {
  for (LayerKind k : {LayerKind::Conv1d, LayerKind::Dense, LayerKind::Relu, LayerKind::Flatten,
                      LayerKind::GlobalAvgPool, LayerKind::Correlation}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown layer kind '" + name + "'");
}

namespace {

std::string layer_label(const LayerSpec& l, std::size_t index) {
  return "layer " + std::to_string(index) + " (" + to_string(l.kind) + ")";
}

}  // namespace

std::vector<Shape> ModelConfig::layer_shapes() const {
  if (channels == 0 || samples == 0) throw ConfigError("model input shape must be positive");
  if (classes < 2) throw ConfigError("model needs at least 2 classes");
  if (layers.empty()) throw ConfigError("model has no layers");
  std::vector<Shape> shapes;
  Shape cur{channels, samples};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::Conv1d: {
        if (cur.size() != 2) throw ConfigError(layer_label(l, i) + " needs a [C x L] input");
        if (l.units == 0 || l.kernel == 0 || l.stride == 0 || l.groups == 0)
          throw ConfigError(layer_label(l, i) + " needs positive units/kernel/stride/groups");
        if (cur[0] % l.groups != 0 || l.units % l.groups != 0)
          throw ConfigError(layer_label(l, i) + ": groups must divide input and output channels");
        if (l.kernel > cur[1])
          throw ConfigError(layer_label(l, i) + ": kernel " + std::to_string(l.kernel) + " longer than input " +
                            std::to_string(cur[1]));
        cur = Shape{l.units, (cur[1] - l.kernel) / l.stride + 1};
        break;
      }
      case LayerKind::Dense:
        if (cur.size() != 1) throw ConfigError(layer_label(l, i) + " needs a flat input; insert flatten");
        if (l.units == 0) throw ConfigError(layer_label(l, i) + " needs positive units");
        cur = Shape{l.units};
        break;
      case LayerKind::Relu:
        break;
      case LayerKind::Flatten:
        cur = Shape{numel(cur)};
        break;
      case LayerKind::GlobalAvgPool:
        if (cur.size() != 2) throw ConfigError(layer_label(l, i) + " needs a [C x L] input");
        cur = Shape{cur[0]};
        break;
      case LayerKind::Correlation:
        if (cur.size() != 2) throw ConfigError(layer_label(l, i) + " needs a [C x L] input");
        cur = Shape{cur[0], cur[0]};
        break;
    }
    shapes.push_back(cur);
  }
  if (shapes.back() != Shape{classes}) {
    throw ConfigError("final layer emits " + to_string(shapes.back()) + ", expected " + std::to_string(classes) +
                      " logits");
  }
  return shapes;
}

std::vector<std::string> ModelConfig::tap_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].tap) continue;
    names.push_back(layers[i].name.empty() ? to_string(layers[i].kind) + std::to_string(i) : layers[i].name);
  }
  return names;
}

std::size_t ModelConfig::parameter_count() const {
  const auto shapes = layer_shapes();
  std::size_t count = 0;
  Shape in{channels, samples};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.kind == LayerKind::Conv1d) count += l.units * (in[0] / l.groups) * l.kernel + l.units;
    if (l.kind == LayerKind::Dense) count += in[0] * l.units + l.units;
    in = shapes[i];
  }
  return count;
}

std::string ModelConfig::to_text() const {
  json j;
  j["channels"] = channels;
  j["samples"] = samples;
  j["classes"] = classes;
  j["layers"] = json::array();
  for (const LayerSpec& l : layers) {
    json jl;
    jl["kind"] = to_string(l.kind);
    if (l.kind == LayerKind::Conv1d || l.kind == LayerKind::Dense) jl["units"] = l.units;
    if (l.kind == LayerKind::Conv1d) {
      jl["kernel"] = l.kernel;
      jl["stride"] = l.stride;
      jl["groups"] = l.groups;
    }
    if (l.tap) jl["tap"] = true;
    if (!l.name.empty()) jl["name"] = l.name;
    j["layers"].push_back(std::move(jl));
  }
  return j.dump();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.channels = j.at("channels").get<std::size_t>();
    cfg.samples = j.at("samples").get<std::size_t>();
    cfg.classes = j.value("classes", std::size_t{2});
    for (const json& jl : j.at("layers")) {
      LayerSpec l;
      l.kind = parse_layer_kind(jl.at("kind").get<std::string>());
      l.units = jl.value("units", std::size_t{0});
      l.kernel = jl.value("kernel", std::size_t{0});
      l.stride = jl.value("stride", std::size_t{1});
      l.groups = jl.value("groups", std::size_t{1});
      l.tap = jl.value("tap", false);
      l.name = jl.value("name", std::string{});
      cfg.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read model config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

Architecture architecture(const ModelConfig& config) {
  const auto shapes = config.layer_shapes();
  Architecture arch;
  for (std::size_t i = 0; i < shapes.size(); ++i) arch.emplace_back(config.layers[i].kind, shapes[i]);
  return arch;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& p : params) n += p.size();
  return n;
}

void Model::zero_grad() {
  for (Tensor& p : params) p.zero_grad();
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  const auto shapes = config.layer_shapes();
  Model model;
  model.config = config;
  model.seed = seed;
  Rng rng(seed);
  Shape in{config.channels, config.samples};
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const LayerSpec& l = config.layers[i];
    Shape wshape;
    std::size_t fan_in = 0;
    if (l.kind == LayerKind::Conv1d) {
      wshape = {l.units, in[0] / l.groups, l.kernel};
      fan_in = (in[0] / l.groups) * l.kernel;
    } else if (l.kind == LayerKind::Dense) {
      wshape = {in[0], l.units};
      fan_in = in[0];
    }
    if (!wshape.empty()) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::vector<double> w(numel(wshape));
      for (double& v : w) v = rng.uniform(-bound, bound);
      model.params.emplace_back(std::move(wshape), std::move(w), true);
      model.params.push_back(Tensor::zeros({l.units}, true));
    }
    in = shapes[i];
  }
  return model;
}

Model clone_architecture(const Model& model, std::uint64_t seed) { return build_model(model.config, seed); }

ForwardResult forward_with_taps(Model& model, Tape& tape, const Tensor& batch, bool track_grad) {
  const ModelConfig& cfg = model.config;
  if (batch.shape.size() != 3 || batch.shape[1] != cfg.channels || batch.shape[2] != cfg.samples) {
    throw DimensionError("forward: batch " + to_string(batch.shape) + " does not match model input [B x " +
                         std::to_string(cfg.channels) + " x " + std::to_string(cfg.samples) + "]");
  }
  const std::size_t rows = batch.shape[0];
  auto bind = [&](Tensor& p) { return track_grad ? tape.parameter(p) : tape.constant(p.shape, p.data); };

  ForwardResult out;
  const auto names = cfg.tap_names();
  std::size_t next_tap = 0;
  std::size_t next_param = 0;
  Var x = tape.constant(batch.shape, batch.data);
  for (const LayerSpec& l : cfg.layers) {
    switch (l.kind) {
      case LayerKind::Conv1d: {
        Var w = bind(model.params[next_param++]);
        Var b = bind(model.params[next_param++]);
        x = add_bias(conv1d(x, w, l.stride, l.groups), b);
        break;
      }
      case LayerKind::Dense: {
        Var w = bind(model.params[next_param++]);
        Var b = bind(model.params[next_param++]);
        x = add_bias(matmul(x, w), b);
        break;
      }
      case LayerKind::Relu:
        x = relu(x);
        break;
      case LayerKind::Flatten:
        x = reshape(x, {rows, x.size() / rows});
        break;
      case LayerKind::GlobalAvgPool:
        x = mean_last_axis(x);
        break;
      case LayerKind::Correlation:
        x = channel_correlation(x);
        break;
    }
    if (l.tap) out.taps.emplace_back(names[next_tap++], x);
  }
  out.logits = x;
  return out;
}

std::vector<int> predict(Model& model, const Tensor& batch) {
  Tape tape;
  const ForwardResult fr = forward_with_taps(model, tape, batch, false);
  const auto z = fr.logits.value();
  const std::size_t rows = fr.logits.shape()[0], cols = fr.logits.shape()[1];
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (z[r * cols + c] > z[r * cols + best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace dbkd
