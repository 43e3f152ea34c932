#include "tdml/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "tdml/errors.hpp"

namespace tdml {

FeatureMap::FeatureMap(std::size_t h, std::size_t w, std::size_t c, std::vector<double> values)
    : height(h), width(w), channels(c), data(std::move(values)) {
  if (data.size() != h * w * c) throw std::invalid_argument("FeatureMap: data length mismatch");
}

std::size_t ModelConfig::output_dim() const {
  if (fc_reduction) return *fc_reduction;
  return dense_dims.empty() ? 0 : dense_dims.back();
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("ModelConfig: input_dim must be >= 1");
  if (dense_dims.empty()) throw std::invalid_argument("ModelConfig: dense_dims must be nonempty");
  for (std::size_t d : dense_dims)
    if (d == 0) throw std::invalid_argument("ModelConfig: dense layer width must be >= 1");
  if (conv_channels) {
    if (input_kind != InputKind::kMap)
      throw std::invalid_argument("ModelConfig: a conv layer requires map inputs");
    if (*conv_channels == 0) throw std::invalid_argument("ModelConfig: conv_channels must be >= 1");
  }
  if (fc_reduction && (*fc_reduction == 0 || *fc_reduction >= dense_dims.back())) {
    throw std::invalid_argument("ModelConfig: fc_reduction must satisfy 1 <= R < " +
                                std::to_string(dense_dims.back()));
  }
}

std::vector<LayerShape> layer_shapes(const ModelConfig& config) {
  config.validate();
  std::vector<LayerShape> shapes;
  std::size_t width = config.input_dim;
  if (config.conv_channels) {
    shapes.push_back({LayerKind::kConv3x3, *config.conv_channels, 9 * config.input_dim});
    width = *config.conv_channels;
  }
  for (std::size_t d : config.dense_dims) {
    shapes.push_back({LayerKind::kDense, d, width});
    width = d;
  }
  if (config.fc_reduction) shapes.push_back({LayerKind::kDense, *config.fc_reduction, width});
  return shapes;
}

ParamSet::ParamSet(std::vector<LayerShape> shapes) : shapes_(std::move(shapes)) {
  std::size_t total = 0;
  for (const auto& s : shapes_) {
    offsets_.push_back(total);
    total += s.out * s.in + s.out;
  }
  values_.assign(total, 0.0);
}

ParamSet::ParamSet(std::vector<LayerShape> shapes, std::vector<double> flat)
    : ParamSet(std::move(shapes)) {
  if (flat.size() != values_.size()) {
    throw std::invalid_argument("ParamSet: expected " + std::to_string(values_.size()) +
                                " values, got " + std::to_string(flat.size()));
  }
  values_ = std::move(flat);
}

std::span<double> ParamSet::weights(std::size_t layer) {
  const auto& s = shapes_.at(layer);
  return {values_.data() + offsets_[layer], s.out * s.in};
}
std::span<const double> ParamSet::weights(std::size_t layer) const {
  const auto& s = shapes_.at(layer);
  return {values_.data() + offsets_[layer], s.out * s.in};
}
std::span<double> ParamSet::bias(std::size_t layer) {
  const auto& s = shapes_.at(layer);
  return {values_.data() + offsets_[layer] + s.out * s.in, s.out};
}
std::span<const double> ParamSet::bias(std::size_t layer) const {
  const auto& s = shapes_.at(layer);
  return {values_.data() + offsets_[layer] + s.out * s.in, s.out};
}

ParamSet init_params(const ModelConfig& config, std::uint64_t seed) {
  ParamSet params(layer_shapes(config));
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(params.shape(l).in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : params.weights(l)) w = dist(rng);
  }
  return params;
}

std::vector<double> gap(const FeatureMap& map) {
  if (map.height == 0 || map.width == 0 || map.channels == 0)
    throw std::invalid_argument("gap: empty feature map");
  std::vector<double> out(map.channels, 0.0);
  for (std::size_t p = 0; p < map.height * map.width; ++p)
    for (std::size_t c = 0; c < map.channels; ++c) out[c] += map.data[p * map.channels + c];
  const double inv = 1.0 / static_cast<double>(map.height * map.width);
  for (double& v : out) v *= inv;
  return out;
}

namespace {

FeatureMap conv3x3_relu(const FeatureMap& in, std::span<const double> w, std::span<const double> b,
                        std::size_t out_channels) {
  const std::size_t cin = in.channels;
  FeatureMap out(in.height, in.width, out_channels);
  for (std::size_t h = 0; h < in.height; ++h) {
    for (std::size_t x = 0; x < in.width; ++x) {
      for (std::size_t o = 0; o < out_channels; ++o) {
        double acc = b[o];
        const double* wo = w.data() + o * 9 * cin;
        for (int ky = 0; ky < 3; ++ky) {
          const long yy = static_cast<long>(h) + ky - 1;
          if (yy < 0 || yy >= static_cast<long>(in.height)) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const long xx = static_cast<long>(x) + kx - 1;
            if (xx < 0 || xx >= static_cast<long>(in.width)) continue;
            const double* src = &in.data[(static_cast<std::size_t>(yy) * in.width +
                                          static_cast<std::size_t>(xx)) * cin];
            const double* wk = wo + (ky * 3 + kx) * cin;
            for (std::size_t c = 0; c < cin; ++c) acc += wk[c] * src[c];
          }
        }
        out.at(h, x, o) = acc > 0.0 ? acc : 0.0;
      }
    }
  }
  return out;
}

// grad_out is w.r.t. the post-ReLU output. Accumulates weight/bias grads and
// returns the gradient w.r.t. the conv input.
FeatureMap conv3x3_relu_backward(const FeatureMap& in, const FeatureMap& out,
                                 const FeatureMap& grad_out, std::span<const double> w,
                                 std::span<double> gw, std::span<double> gb) {
  const std::size_t cin = in.channels;
  const std::size_t cout = out.channels;
  FeatureMap grad_in(in.height, in.width, cin);
  for (std::size_t h = 0; h < in.height; ++h) {
    for (std::size_t x = 0; x < in.width; ++x) {
      for (std::size_t o = 0; o < cout; ++o) {
        if (out.at(h, x, o) <= 0.0) continue;
        const double g = grad_out.at(h, x, o);
        if (g == 0.0) continue;
        gb[o] += g;
        const double* wo = w.data() + o * 9 * cin;
        double* gwo = gw.data() + o * 9 * cin;
        for (int ky = 0; ky < 3; ++ky) {
          const long yy = static_cast<long>(h) + ky - 1;
          if (yy < 0 || yy >= static_cast<long>(in.height)) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const long xx = static_cast<long>(x) + kx - 1;
            if (xx < 0 || xx >= static_cast<long>(in.width)) continue;
            const std::size_t base =
                (static_cast<std::size_t>(yy) * in.width + static_cast<std::size_t>(xx)) * cin;
            const std::size_t k = (ky * 3 + kx) * cin;
            for (std::size_t c = 0; c < cin; ++c) {
              gwo[k + c] += g * in.data[base + c];
              grad_in.data[base + c] += g * wo[k + c];
            }
          }
        }
      }
    }
  }
  return grad_in;
}

FeatureMap gap_backward(std::span<const double> grad, std::size_t h, std::size_t w) {
  FeatureMap out(h, w, grad.size());
  const double inv = 1.0 / static_cast<double>(h * w);
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t c = 0; c < grad.size(); ++c) out.data[p * grad.size() + c] = grad[c] * inv;
  return out;
}

// y = x W^T + b for W stored out x in.
Matrix dense_forward(const Matrix& x, std::span<const double> w, std::span<const double> b,
                     std::size_t out) {
  const std::size_t in = x.cols();
  Matrix y(x.rows(), out);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xi = x.row(i);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* wo = w.data() + o * in;
      for (std::size_t k = 0; k < in; ++k) acc += wo[k] * xi[k];
      y(i, o) = acc;
    }
  }
  return y;
}

}  // namespace

Model::Model(ModelConfig config) : config_(std::move(config)), shapes_(layer_shapes(config_)) {}

void Model::check_params(const ParamSet& params) const {
  if (params.shapes() != shapes_)
    throw std::invalid_argument("Model: parameter shapes do not match the model config");
}

ForwardResult Model::forward(const ParamSet& params, std::span<const Record> batch) const {
  check_params(params);
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");

  ForwardResult result;
  ForwardTrace& trace = result.trace;
  trace.config = config_;

  const std::size_t n = batch.size();
  std::size_t layer = 0;
  std::size_t width = config_.input_dim;
  Matrix features;

  if (config_.input_kind == InputKind::kVector) {
    features = Matrix(n, width);
    for (std::size_t i = 0; i < n; ++i) {
      const auto* v = std::get_if<std::vector<double>>(&batch[i].payload);
      if (v == nullptr || v->size() != width) {
        throw std::invalid_argument("forward: record '" + batch[i].id +
                                    "' is not a vector of length " + std::to_string(width));
      }
      std::copy(v->begin(), v->end(), features.row(i).begin());
    }
  } else {
    if (config_.conv_channels) {
      width = *config_.conv_channels;
      ++layer;
    }
    features = Matrix(n, width);
    trace.maps.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto* m = std::get_if<FeatureMap>(&batch[i].payload);
      if (m == nullptr || m->channels != config_.input_dim || m->height == 0 || m->width == 0 ||
          m->data.size() != m->height * m->width * m->channels) {
        throw std::invalid_argument("forward: record '" + batch[i].id +
                                    "' is not a feature map with " +
                                    std::to_string(config_.input_dim) + " channels");
      }
      auto& cache = trace.maps[i];
      cache.input = *m;
      std::vector<double> pooled;
      if (config_.conv_channels) {
        cache.conv_out = conv3x3_relu(*m, params.weights(0), params.bias(0), width);
        pooled = gap(cache.conv_out);
      } else {
        pooled = gap(*m);
      }
      std::copy(pooled.begin(), pooled.end(), features.row(i).begin());
    }
  }

  const std::size_t dense_count = config_.dense_dims.size();
  for (std::size_t j = 0; layer < params.layer_count(); ++layer, ++j) {
    trace.layer_inputs.push_back(features);
    Matrix y = dense_forward(features, params.weights(layer), params.bias(layer),
                             params.shape(layer).out);
    trace.pre_acts.push_back(y);
    if (j + 1 < dense_count) {
      for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
    }
    features = std::move(y);
  }

  trace.raw = features;
  trace.raw_norms.resize(n);
  for (std::size_t i = 0; i < n; ++i) trace.raw_norms[i] = norm(features.row(i));
  trace.embeddings = l2_normalize_rows(features);
  result.embeddings = trace.embeddings;
  return result;
}

Matrix Model::embed(const ParamSet& params, std::span<const Record> batch) const {
  return forward(params, batch).embeddings;
}

Matrix l2_normalize_backward(const Matrix& normalized, std::span<const double> norms,
                             const Matrix& grad_out) {
  Matrix g(grad_out.rows(), grad_out.cols());
  for (std::size_t i = 0; i < grad_out.rows(); ++i) {
    auto xhat = normalized.row(i);
    auto go = grad_out.row(i);
    const double proj = dot(xhat, go);
    auto gi = g.row(i);
    for (std::size_t k = 0; k < gi.size(); ++k) gi[k] = (go[k] - xhat[k] * proj) / norms[i];
  }
  return g;
}

Model::Gradients Model::backward(const ParamSet& params, const ForwardTrace& trace,
                                 const Matrix& grad_embeddings) const {
  check_params(params);
  if (trace.config != config_) throw std::invalid_argument("backward: trace from another model");
  const std::size_t n = trace.embeddings.rows();
  if (grad_embeddings.rows() != n || grad_embeddings.cols() != trace.embeddings.cols()) {
    throw std::invalid_argument("backward: gradient shape does not match forward output");
  }

  Gradients grads{params.zeros_like(), {}};
  Matrix g = l2_normalize_backward(trace.embeddings, trace.raw_norms, grad_embeddings);

  const std::size_t first_dense = config_.conv_channels ? 1 : 0;
  const std::size_t dense_count = config_.dense_dims.size();
  for (std::size_t l = params.layer_count(); l-- > first_dense;) {
    const std::size_t j = l - first_dense;
    const Matrix& pre = trace.pre_acts[j];
    if (j + 1 < dense_count) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t k = 0; k < g.cols(); ++k)
          if (pre(i, k) <= 0.0) g(i, k) = 0.0;
    }
    const Matrix& x = trace.layer_inputs[j];
    const std::size_t out = params.shape(l).out;
    const std::size_t in = params.shape(l).in;
    auto gw = grads.params.weights(l);
    auto gb = grads.params.bias(l);
    auto w = params.weights(l);
    Matrix gx(n, in);
    for (std::size_t i = 0; i < n; ++i) {
      auto gi = g.row(i);
      auto xi = x.row(i);
      auto gxi = gx.row(i);
      for (std::size_t o = 0; o < out; ++o) {
        const double go = gi[o];
        if (go == 0.0) continue;
        gb[o] += go;
        double* gwo = gw.data() + o * in;
        const double* wo = w.data() + o * in;
        for (std::size_t k = 0; k < in; ++k) {
          gwo[k] += go * xi[k];
          gxi[k] += go * wo[k];
        }
      }
    }
    g = std::move(gx);
  }

  grads.inputs.reserve(n);
  if (config_.input_kind == InputKind::kVector) {
    for (std::size_t i = 0; i < n; ++i)
      grads.inputs.emplace_back(std::vector<double>(g.row(i).begin(), g.row(i).end()));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& cache = trace.maps[i];
      if (config_.conv_channels) {
        FeatureMap gconv = gap_backward(g.row(i), cache.conv_out.height, cache.conv_out.width);
        grads.inputs.emplace_back(conv3x3_relu_backward(cache.input, cache.conv_out, gconv,
                                                        params.weights(0),
                                                        grads.params.weights(0),
                                                        grads.params.bias(0)));
      } else {
        grads.inputs.emplace_back(gap_backward(g.row(i), cache.input.height, cache.input.width));
      }
    }
  }
  return grads;
}

}  // namespace tdml
