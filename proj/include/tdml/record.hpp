#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace tdml {

// H x W x C feature map stored height-major, channels innermost:
// value(h, w, c) = data[(h * width + w) * channels + c].
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}
  FeatureMap(std::size_t h, std::size_t w, std::size_t c, std::vector<double> values);

  double& at(std::size_t h, std::size_t w, std::size_t c) { return data[(h * width + w) * channels + c]; }
  double at(std::size_t h, std::size_t w, std::size_t c) const {
    return data[(h * width + w) * channels + c];
  }

  bool operator==(const FeatureMap&) const = default;
};

using Payload = std::variant<std::vector<double>, FeatureMap>;

struct Record {
  std::string id;
  std::string label;
  Payload payload;
};

// Flat (id, label, vector) triple as stored in embedding files.
struct VectorRecord {
  std::string id;
  std::string label;
  std::vector<double> values;

  bool operator==(const VectorRecord&) const = default;
};

}  // namespace tdml
