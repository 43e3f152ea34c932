#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tdml/numerics.hpp"
#include "tdml/record.hpp"

namespace tdml {

enum class InputKind { kVector, kMap };

// Layer stack of the embedding network:
//   [3x3 same-padding conv + ReLU] -> GAP      (map inputs only)
//   dense_dims[0] -> ReLU -> ... -> dense_dims.back()
//   [linear reduction to fc_reduction]
//   L2 normalization
// There is no activation after the last dense layer, so the reduction layer
// is a linear map of the embedding.
struct ModelConfig {
  InputKind input_kind = InputKind::kVector;
  // Vector length for vector inputs, channel count for map inputs.
  std::size_t input_dim = 0;
  std::optional<std::size_t> conv_channels;
  std::vector<std::size_t> dense_dims;
  std::optional<std::size_t> fc_reduction;

  // Width of the normalized output.
  std::size_t output_dim() const;
  // Throws std::invalid_argument on an inconsistent stack.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

enum class LayerKind : std::uint8_t { kConv3x3 = 0, kDense = 1 };

struct LayerShape {
  LayerKind kind;
  std::size_t out;  // output channels / units
  std::size_t in;   // fan-in: 9 * C_in for conv, input width for dense
  bool operator==(const LayerShape&) const = default;
};

std::vector<LayerShape> layer_shapes(const ModelConfig& config);

// All trainable weights in one contiguous buffer. Layer i owns a weight
// block of out*in values (row-major, out rows) followed by out biases.
// Conv weights are indexed [out][(ky * 3 + kx) * C_in + c_in].
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::vector<LayerShape> shapes);
  ParamSet(std::vector<LayerShape> shapes, std::vector<double> flat);

  std::size_t layer_count() const noexcept { return shapes_.size(); }
  const std::vector<LayerShape>& shapes() const noexcept { return shapes_; }
  const LayerShape& shape(std::size_t layer) const { return shapes_.at(layer); }

  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> bias(std::size_t layer);
  std::span<const double> bias(std::size_t layer) const;

  std::span<double> flat() noexcept { return values_; }
  std::span<const double> flat() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  ParamSet zeros_like() const { return ParamSet(shapes_); }

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<LayerShape> shapes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

// He-style uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)], zero biases.
ParamSet init_params(const ModelConfig& config, std::uint64_t seed);

// Per-channel spatial mean.
std::vector<double> gap(const FeatureMap& map);

// Activations cached by forward() for one batch.
struct ForwardTrace {
  struct MapCache {
    FeatureMap input;
    FeatureMap conv_out;  // after ReLU; empty without a conv layer
  };

  ModelConfig config;
  std::vector<MapCache> maps;        // one per record for map inputs
  std::vector<Matrix> layer_inputs;  // input to each dense/reduction layer
  std::vector<Matrix> pre_acts;      // output of each dense/reduction layer before ReLU
  Matrix raw;                        // final layer output before normalization
  std::vector<double> raw_norms;
  Matrix embeddings;
};

struct ForwardResult {
  Matrix embeddings;
  ForwardTrace trace;
};

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }

  ForwardResult forward(const ParamSet& params, std::span<const Record> batch) const;
  // Embeddings only; no trace retained.
  Matrix embed(const ParamSet& params, std::span<const Record> batch) const;

  struct Gradients {
    ParamSet params;
    std::vector<Payload> inputs;
  };
  Gradients backward(const ParamSet& params, const ForwardTrace& trace,
                     const Matrix& grad_embeddings) const;

 private:
  void check_params(const ParamSet& params) const;

  ModelConfig config_;
  std::vector<LayerShape> shapes_;
};

// Backward of row-wise L2 normalization: g_in = (g - xhat (xhat . g)) / |x|.
Matrix l2_normalize_backward(const Matrix& normalized, std::span<const double> norms,
                             const Matrix& grad_out);

}  // namespace tdml
