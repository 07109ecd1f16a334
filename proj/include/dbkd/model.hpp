#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dbkd/tensor.hpp"

namespace dbkd {

enum class LayerKind { Conv1d, Dense, Relu, Flatten, GlobalAvgPool, Correlation };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  // conv1d: output channels; dense: output units.
  std::size_t units = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t groups = 1;
  bool tap = false;
  // Tap name; defaults to "<kind><index>".
  std::string name;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelConfig {
  std::size_t channels = 0;
  std::size_t samples = 0;
  std::size_t classes = 2;
  std::vector<LayerSpec> layers;

  // Per-sample output shape of every layer; throws ConfigError when shapes
  // do not compose or the last layer does not emit `classes` logits.
  std::vector<Shape> layer_shapes() const;
  void validate() const { (void)layer_shapes(); }
  std::vector<std::string> tap_names() const;
  std::size_t parameter_count() const;

  // Canonical JSON text; equal configs produce identical bytes.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  static ModelConfig load(const std::filesystem::path& path);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// (layer kind, per-sample output shape) for each layer.
using Architecture = std::vector<std::pair<LayerKind, Shape>>;
Architecture architecture(const ModelConfig& config);

struct Model {
  ModelConfig config;
  std::uint64_t seed = 0;
  // Weight then bias for each conv1d/dense layer, in layer order.
  std::vector<Tensor> params;

  std::size_t parameter_count() const;
  void zero_grad();
};

using Taps = std::vector<std::pair<std::string, Var>>;

struct ForwardResult {
  Var logits;  // [B x M]
  Taps taps;   // declaration order
};

// He fan-in uniform weights U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases.
Model build_model(const ModelConfig& config, std::uint64_t seed);
Model clone_architecture(const Model& model, std::uint64_t seed);

// batch is [B x C x L]. With track_grad the parameters are bound as tape
// leaves so tape.backward() fills their grads; otherwise they are constants.
ForwardResult forward_with_taps(Model& model, Tape& tape, const Tensor& batch, bool track_grad = true);

// Argmax class per row, no gradient tracking.
std::vector<int> predict(Model& model, const Tensor& batch);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const char> bytes);

}  // namespace dbkd
