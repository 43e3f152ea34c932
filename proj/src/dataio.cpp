#include "tdml/dataio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "tdml/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace tdml {

namespace {

constexpr char kEmbeddingMagic[4] = {'T', 'D', 'M', 'L'};
constexpr char kCheckpointMagic[4] = {'T', 'D', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string32(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

template <typename Error>
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::uint64_t base = 0)
      : bytes_(bytes), base_(base) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> get_span(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t offset() const { return base_ + pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  [[noreturn]] void fail(const std::string& what) const { throw make(what); }

 private:
  Error make(const std::string& what) const {
    if constexpr (std::is_same_v<Error, FormatError>) {
      return FormatError(what, offset());
    } else {
      return Error(what + " (at byte offset " + std::to_string(offset()) + ")");
    }
  }
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw make(std::string("truncated input while reading ") + what);
  }

  std::span<const std::uint8_t> bytes_;
  std::uint64_t base_;
  std::size_t pos_ = 0;
};

std::string zero_pad(std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, value);
  return buf;
}

int digits(std::size_t n) {
  int d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

}  // namespace

// --- synthetic data -------------------------------------------------------

std::pair<Dataset, Dataset> generate_clusters(const ClusterOptions& o) {
  if (o.num_classes < 2) throw std::invalid_argument("generate_clusters: need >= 2 classes");
  if (o.per_class < 2) throw std::invalid_argument("generate_clusters: need >= 2 records per class");
  if (o.dim < 1) throw std::invalid_argument("generate_clusters: dim must be >= 1");
  if (!(o.split_fraction > 0.0 && o.split_fraction < 1.0))
    throw std::invalid_argument("generate_clusters: split fraction must lie in (0, 1)");
  if (!(o.separation >= 0.0) || !(o.spread >= 0.0))
    throw std::invalid_argument("generate_clusters: separation and spread must be >= 0");

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(o.per_class) * o.split_fraction)), 1,
      o.per_class - 1);

  Dataset train{{}, Split::kTrain};
  Dataset test{{}, Split::kTest};
  const int class_digits = std::max(2, digits(o.num_classes - 1));
  const int sample_digits = std::max(4, digits(o.per_class - 1));
  for (std::size_t c = 0; c < o.num_classes; ++c) {
    std::vector<double> center(o.dim);
    double len = 0.0;
    do {
      for (double& v : center) v = normal(rng);
      len = std::sqrt(std::inner_product(center.begin(), center.end(), center.begin(), 0.0));
    } while (len < 1e-12);
    for (double& v : center) v *= o.separation / len;

    const std::string label = "class_" + zero_pad(c, class_digits);
    for (std::size_t i = 0; i < o.per_class; ++i) {
      std::vector<double> x(o.dim);
      for (std::size_t k = 0; k < o.dim; ++k) x[k] = center[k] + o.spread * normal(rng);
      Record r{"c" + zero_pad(c, class_digits) + "_" + zero_pad(i, sample_digits), label,
               std::move(x)};
      (i < n_train ? train : test).records.push_back(std::move(r));
    }
  }
  return {std::move(train), std::move(test)};
}

std::vector<Record> reshape_to_maps(std::span<const Record> records, std::size_t height,
                                    std::size_t width) {
  if (height == 0 || width == 0) throw std::invalid_argument("reshape_to_maps: empty grid");
  std::vector<Record> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto* v = std::get_if<std::vector<double>>(&r.payload);
    if (v == nullptr || v->empty() || v->size() % (height * width) != 0) {
      throw std::invalid_argument("reshape_to_maps: record '" + r.id + "' cannot be viewed as " +
                                  std::to_string(height) + "x" + std::to_string(width) + "xC");
    }
    out.push_back({r.id, r.label, FeatureMap(height, width, v->size() / (height * width), *v)});
  }
  return out;
}

std::vector<VectorRecord> to_vector_records(std::span<const Record> records) {
  std::vector<VectorRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (const auto* v = std::get_if<std::vector<double>>(&r.payload)) {
      out.push_back({r.id, r.label, *v});
    } else {
      out.push_back({r.id, r.label, std::get<FeatureMap>(r.payload).data});
    }
  }
  return out;
}

std::vector<Record> to_records(std::span<const VectorRecord> records) {
  std::vector<Record> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.id, r.label, r.values});
  return out;
}

// --- TDML embedding files -------------------------------------------------

std::vector<std::uint8_t> encode_embeddings(std::span<const VectorRecord> records) {
  const std::size_t dim = records.empty() ? 0 : records.front().values.size();
  std::vector<std::string> labels;
  std::unordered_map<std::string, std::uint32_t> label_index;
  std::unordered_set<std::string> ids;
  for (const auto& r : records) {
    if (r.values.size() != dim) {
      throw std::invalid_argument("write_embeddings: record '" + r.id + "' has length " +
                                  std::to_string(r.values.size()) + ", expected " +
                                  std::to_string(dim));
    }
    if (r.id.size() > 0xFFFF) throw std::invalid_argument("write_embeddings: id too long");
    if (!ids.insert(r.id).second)
      throw std::invalid_argument("write_embeddings: duplicate id '" + r.id + "'");
    if (label_index.emplace(r.label, static_cast<std::uint32_t>(labels.size())).second)
      labels.push_back(r.label);
  }

  ByteWriter w;
  w.put_bytes(kEmbeddingMagic, 4);
  w.put(kFormatVersion);
  w.put(static_cast<std::uint32_t>(dim));
  w.put(static_cast<std::uint64_t>(records.size()));
  w.put(static_cast<std::uint32_t>(labels.size()));
  for (const auto& l : labels) w.put_string32(l);
  for (const auto& r : records) {
    w.put(label_index.at(r.label));
    w.put(static_cast<std::uint16_t>(r.id.size()));
    w.put_bytes(r.id.data(), r.id.size());
    for (double v : r.values) w.put(static_cast<float>(v));
  }
  return std::move(w.bytes());
}

std::vector<VectorRecord> decode_embeddings(std::span<const std::uint8_t> bytes) {
  ByteReader<FormatError> r(bytes);
  if (r.get_string(4, "magic") != std::string(kEmbeddingMagic, 4)) {
    throw FormatError("bad magic, not a TDML embedding file", 0);
  }
  const auto version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFormatVersion)
    throw FormatError("unsupported TDML version " + std::to_string(version), version_at);
  const auto dim = r.get<std::uint32_t>("dim");
  const auto count = r.get<std::uint64_t>("record count");
  const auto label_count = r.get<std::uint32_t>("label count");
  std::vector<std::string> labels;
  for (std::uint32_t i = 0; i < label_count; ++i) {
    const auto len = r.get<std::uint32_t>("label length");
    labels.push_back(r.get_string(len, "label bytes"));
  }

  std::vector<VectorRecord> out;
  std::unordered_set<std::string> ids;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto label_at = r.offset();
    const auto label = r.get<std::uint32_t>("record label index");
    if (label >= labels.size()) {
      throw FormatError("label index " + std::to_string(label) + " out of range", label_at);
    }
    const auto id_len = r.get<std::uint16_t>("id length");
    const auto id_at = r.offset();
    VectorRecord rec{r.get_string(id_len, "id bytes"), labels[label], {}};
    if (!ids.insert(rec.id).second) throw FormatError("duplicate id '" + rec.id + "'", id_at);
    rec.values.resize(dim);
    for (auto& v : rec.values) {
      const auto at = r.offset();
      const float f = r.get<float>("feature values");
      if (!std::isfinite(f)) throw FormatError("non-finite feature value", at);
      v = f;
    }
    out.push_back(std::move(rec));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last record");
  return out;
}

void write_embeddings(const std::filesystem::path& path, std::span<const VectorRecord> records) {
  write_file_atomic(path, encode_embeddings(records));
}

std::vector<VectorRecord> read_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(read_file(path));
}

// --- CSV ------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<VectorRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  std::size_t dim = 0;
  bool have_header = false;
  std::vector<VectorRecord> out;
  std::unordered_set<std::string> ids;

  while (std::getline(in, line)) {
    ++row;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split_fields(view);
    if (!have_header) {
      if (fields.size() < 3 || trim(fields[0]) != "id" || trim(fields[1]) != "label")
        throw ParseError("header must be id,label,f0,...", row);
      dim = fields.size() - 2;
      for (std::size_t k = 0; k < dim; ++k) {
        if (trim(fields[k + 2]) != "f" + std::to_string(k))
          throw ParseError("header column " + std::to_string(k + 3) + " must be f" +
                               std::to_string(k),
                           row);
      }
      have_header = true;
      continue;
    }
    if (fields.size() != dim + 2) {
      throw ParseError("expected " + std::to_string(dim) + " features, found " +
                           std::to_string(fields.size() < 2 ? 0 : fields.size() - 2),
                       row);
    }
    VectorRecord rec{std::string(trim(fields[0])), std::string(trim(fields[1])), {}};
    if (rec.id.empty()) throw ParseError("empty id", row);
    if (!ids.insert(rec.id).second) throw ParseError("duplicate id '" + rec.id + "'", row);
    rec.values.reserve(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      const std::string_view f = trim(fields[k + 2]);
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(v)) {
        throw ParseError("feature f" + std::to_string(k) + " is not a finite number: '" +
                             std::string(f) + "'",
                         row);
      }
      rec.values.push_back(v);
    }
    out.push_back(std::move(rec));
  }
  if (!have_header) throw ParseError("missing header", row == 0 ? 1 : row);
  return out;
}

std::vector<VectorRecord> import_csv(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_csv(std::string(bytes.begin(), bytes.end()));
}

std::string format_csv(std::span<const VectorRecord> records) {
  const std::size_t dim = records.empty() ? 0 : records.front().values.size();
  std::string out = "id,label";
  for (std::size_t k = 0; k < dim; ++k) out += ",f" + std::to_string(k);
  out += '\n';
  char buf[64];
  for (const auto& r : records) {
    if (r.values.size() != dim) throw std::invalid_argument("export_csv: ragged records");
    out += r.id;
    out += ',';
    out += r.label;
    for (double v : r.values) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), v);
      out += ',';
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

void export_csv(const std::filesystem::path& path, std::span<const VectorRecord> records) {
  const std::string text = format_csv(records);
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// --- checkpoints ----------------------------------------------------------

namespace {

void put_section(ByteWriter& w, const char tag[4], std::vector<std::uint8_t>&& payload) {
  w.put_bytes(tag, 4);
  w.put(static_cast<std::uint64_t>(payload.size()));
  w.put_bytes(payload.data(), payload.size());
}

std::vector<std::uint8_t> encode_config(const ModelConfig& c) {
  ByteWriter w;
  w.put(static_cast<std::uint8_t>(c.input_kind == InputKind::kMap ? 1 : 0));
  w.put(static_cast<std::uint32_t>(c.input_dim));
  w.put(static_cast<std::uint8_t>(c.conv_channels ? 1 : 0));
  w.put(static_cast<std::uint32_t>(c.conv_channels.value_or(0)));
  w.put(static_cast<std::uint32_t>(c.dense_dims.size()));
  for (std::size_t d : c.dense_dims) w.put(static_cast<std::uint32_t>(d));
  w.put(static_cast<std::uint8_t>(c.fc_reduction ? 1 : 0));
  w.put(static_cast<std::uint32_t>(c.fc_reduction.value_or(0)));
  return std::move(w.bytes());
}

ModelConfig decode_config(ByteReader<CheckpointError>& r) {
  ModelConfig c;
  const auto kind = r.get<std::uint8_t>("input kind");
  if (kind > 1) r.fail("invalid input kind");
  c.input_kind = kind == 1 ? InputKind::kMap : InputKind::kVector;
  c.input_dim = r.get<std::uint32_t>("input dim");
  const auto has_conv = r.get<std::uint8_t>("conv flag");
  const auto conv = r.get<std::uint32_t>("conv channels");
  if (has_conv) c.conv_channels = conv;
  const auto n_dense = r.get<std::uint32_t>("dense layer count");
  if (n_dense > r.remaining() / 4) r.fail("dense layer count exceeds section");
  for (std::uint32_t i = 0; i < n_dense; ++i) c.dense_dims.push_back(r.get<std::uint32_t>("dense width"));
  const auto has_fc = r.get<std::uint8_t>("reduction flag");
  const auto fc = r.get<std::uint32_t>("reduction width");
  if (has_fc) c.fc_reduction = fc;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: inconsistent model config: ") + e.what());
  }
  return c;
}

std::vector<std::uint8_t> encode_params(const ParamSet& p) {
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(p.layer_count()));
  for (const auto& s : p.shapes()) {
    w.put(static_cast<std::uint8_t>(s.kind));
    w.put(static_cast<std::uint32_t>(s.out));
    w.put(static_cast<std::uint32_t>(s.in));
  }
  w.put(static_cast<std::uint64_t>(p.size()));
  for (double v : p.flat()) w.put(v);
  return std::move(w.bytes());
}

ParamSet decode_params(ByteReader<CheckpointError>& r, const ModelConfig& config) {
  const auto layers = r.get<std::uint32_t>("layer count");
  if (layers > r.remaining() / 9) r.fail("layer count exceeds section");
  std::vector<LayerShape> shapes;
  for (std::uint32_t i = 0; i < layers; ++i) {
    const auto kind = r.get<std::uint8_t>("layer kind");
    if (kind > 1) r.fail("invalid layer kind");
    const auto out = r.get<std::uint32_t>("layer out");
    const auto in = r.get<std::uint32_t>("layer in");
    shapes.push_back({static_cast<LayerKind>(kind), out, in});
  }
  if (shapes != layer_shapes(config))
    throw CheckpointError("checkpoint: parameter shapes do not match the model config");
  const auto count = r.get<std::uint64_t>("parameter count");
  ParamSet params(shapes);
  if (count != params.size())
    throw CheckpointError("checkpoint: parameter count " + std::to_string(count) +
                          " does not match shapes (" + std::to_string(params.size()) + ")");
  for (double& v : params.flat()) v = r.get<double>("parameter values");
  return params;
}

std::vector<std::uint8_t> encode_pca(const PcaModel& m) {
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(m.input_dim()));
  w.put(static_cast<std::uint32_t>(m.output_dim()));
  for (double v : m.mean) w.put(v);
  for (double v : m.components.data()) w.put(v);
  for (double v : m.eigenvalues) w.put(v);
  return std::move(w.bytes());
}

PcaModel decode_pca(ByteReader<CheckpointError>& r) {
  const auto dim = r.get<std::uint32_t>("PCA input dim");
  const auto k = r.get<std::uint32_t>("PCA output dim");
  if (k == 0 || k > dim) r.fail("invalid PCA dimensions");
  const std::uint64_t need = (static_cast<std::uint64_t>(dim) + std::uint64_t{k} * dim + k) * 8;
  if (need > r.remaining()) r.fail("PCA section shorter than its dimensions");
  PcaModel m;
  m.mean.resize(dim);
  for (double& v : m.mean) v = r.get<double>("PCA mean");
  m.components = Matrix(k, dim);
  for (double& v : m.components.data()) v = r.get<double>("PCA components");
  m.eigenvalues.resize(k);
  for (double& v : m.eigenvalues) v = r.get<double>("PCA eigenvalues");
  return m;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  if (ck.params.shapes() != layer_shapes(ck.config))
    throw CheckpointError("save_checkpoint: parameter shapes do not match the model config");
  if (ck.pca && ck.pca->input_dim() != ck.config.output_dim())
    throw CheckpointError("save_checkpoint: PCA input dim does not match the embedding dim");
  ByteWriter w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put(kFormatVersion);
  put_section(w, "CONF", encode_config(ck.config));
  put_section(w, "PARM", encode_params(ck.params));
  if (ck.pca) put_section(w, "PCA_", encode_pca(*ck.pca));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader<CheckpointError> r(bytes);
  if (r.get_string(4, "magic") != std::string(kCheckpointMagic, 4))
    throw CheckpointError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFormatVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));

  std::optional<ModelConfig> config;
  std::optional<ParamSet> params;
  std::optional<PcaModel> pca;
  while (r.remaining() > 0) {
    const std::string tag = r.get_string(4, "section tag");
    const auto length = r.get<std::uint64_t>("section length");
    if (length > r.remaining()) {
      r.fail("section " + tag + " declares " + std::to_string(length) + " bytes, only " +
             std::to_string(r.remaining()) + " remain");
    }
    const std::uint64_t base = r.offset();
    ByteReader<CheckpointError> section(r.get_span(length, "section payload"), base);
    if (tag == "CONF" && !config) {
      config = decode_config(section);
    } else if (tag == "PARM" && config && !params) {
      params = decode_params(section, *config);
    } else if (tag == "PCA_" && params && !pca) {
      pca = decode_pca(section);
    } else {
      throw CheckpointError("checkpoint: unexpected section '" + tag + "' at byte offset " +
                            std::to_string(base - 12));
    }
    if (section.remaining() != 0) section.fail("section " + tag + " length does not match its content");
  }
  if (!config || !params) throw CheckpointError("checkpoint: missing CONF or PARM section");
  if (pca && pca->input_dim() != config->output_dim())
    throw CheckpointError("checkpoint: PCA input dim does not match the embedding dim");
  return {std::move(*config), std::move(*params), std::move(pca)};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

// --- files ----------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace tdml
