#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tdml/model.hpp"
#include "tdml/record.hpp"
#include "tdml/reduce.hpp"

namespace tdml {

enum class Split { kTrain, kTest };

struct Dataset {
  std::vector<Record> records;
  Split split = Split::kTrain;
};

struct ClusterOptions {
  std::size_t num_classes = 8;
  std::size_t per_class = 100;
  std::size_t dim = 32;
  double separation = 4.0;
  double spread = 1.0;
  std::uint64_t seed = 0;
  double split_fraction = 0.5;
};

// Gaussian clusters around centers drawn uniformly on the sphere of radius
// `separation`. Each class contributes round(per_class * split_fraction)
// records (clamped to [1, per_class - 1]) to the training split.
std::pair<Dataset, Dataset> generate_clusters(const ClusterOptions& options);

// Reinterprets each length-(H*W*C) vector payload as an H x W x C map.
std::vector<Record> reshape_to_maps(std::span<const Record> records, std::size_t height,
                                    std::size_t width);

std::vector<VectorRecord> to_vector_records(std::span<const Record> records);
std::vector<Record> to_records(std::span<const VectorRecord> records);

// TDML embedding files: "TDML", then little-endian u32 version (1), u32 dim,
// u64 count, label table (u32 count; per label u32 length + UTF-8 bytes) and
// per record u32 label index, u16 id length + id bytes, dim x float32.
std::vector<std::uint8_t> encode_embeddings(std::span<const VectorRecord> records);
std::vector<VectorRecord> decode_embeddings(std::span<const std::uint8_t> bytes);
void write_embeddings(const std::filesystem::path& path, std::span<const VectorRecord> records);
std::vector<VectorRecord> read_embeddings(const std::filesystem::path& path);

// Header `id,label,f0,...,f{d-1}`. Parse failures report the file line.
std::vector<VectorRecord> parse_csv(const std::string& text);
std::vector<VectorRecord> import_csv(const std::filesystem::path& path);
std::string format_csv(std::span<const VectorRecord> records);
void export_csv(const std::filesystem::path& path, std::span<const VectorRecord> records);

struct Checkpoint {
  ModelConfig config;
  ParamSet params;
  std::optional<PcaModel> pca;

  bool operator==(const Checkpoint&) const = default;
};

// Container: "TDCK", u32 version (1), then sections of 4-byte tag + u64
// payload length: CONF (model config), PARM (layer shapes + float64 values),
// and optionally PCA_.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace tdml
