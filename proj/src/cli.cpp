#include "tdml/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdml/dataio.hpp"
#include "tdml/errors.hpp"
#include "tdml/metrics.hpp"
#include "tdml/model.hpp"
#include "tdml/reduce.hpp"
#include "tdml/retrieval.hpp"
#include "tdml/trainer.hpp"

namespace fs = std::filesystem;

namespace tdml::cli {

namespace {

// Bad flag values detected after parsing; mapped to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenDataArgs {
  std::size_t classes = 8;
  std::size_t per_class = 100;
  std::size_t dim = 32;
  double separation = 4.0;
  double spread = 1.0;
  std::uint64_t seed = 0;
  double split = 0.5;
  std::string out;
};

struct TrainArgs {
  std::string train;
  std::string out;
  std::string history;
  double margin = 0.2;
  std::size_t epochs = 30;
  std::size_t batch = 30;
  std::size_t per_class = 3;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::string norm = "sum";
  std::uint64_t seed = 0;
  std::string dense = "32,16";
  std::size_t conv = 0;
  std::size_t fc_reduce = 0;
  std::string map;
  bool no_flip = false;
  std::string warm_start;
  bool save_every_epoch = false;
  unsigned threads = 1;
};

struct EmbedArgs {
  std::string checkpoint;
  std::string in;
  std::string out;
  std::string map;
  bool apply_pca = false;
  unsigned threads = 1;
};

struct PcaArgs {
  std::string fit;
  std::vector<std::string> apply;
  std::vector<std::string> out;
  std::size_t k = 0;
  bool no_renorm = false;
  std::string checkpoint;
  std::string checkpoint_out;
};

struct EvaluateArgs {
  std::string in;
  std::string out;
  bool json = false;
  std::size_t gtm = 0;
  double ng_factor = 4.0;
  bool no_gtm_cap = false;
  unsigned threads = 1;
};

struct ConvertArgs {
  std::string in;
  std::string out;
};

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size() || v <= 0) throw std::invalid_argument(part);
      dims.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--dense: '" + text + "' is not a comma-separated list of widths");
    }
  }
  if (dims.empty()) throw UsageError("--dense: at least one layer width required");
  return dims;
}

std::optional<std::pair<std::size_t, std::size_t>> parse_grid(const std::string& text) {
  if (text.empty()) return std::nullopt;
  std::size_t h = 0;
  std::size_t w = 0;
  char x = 0;
  std::istringstream in(text);
  if (!(in >> h >> x >> w) || x != 'x' || h == 0 || w == 0 || in.rdbuf()->in_avail() > 0)
    throw UsageError("--map: expected HxW, got '" + text + "'");
  return std::make_pair(h, w);
}

// key=value lines describing how an output was produced.
std::string manifest_text(const CLI::App& sub) {
  std::ostringstream m;
  m << "subcommand=" << sub.get_name() << '\n';
  m << "tool_version=" << kToolVersion << '\n';
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || opt->get_lnames().empty()) continue;
    if (opt->get_expected_min() == 0) {
      m << "option." << name << '=' << (opt->count() > 0 ? "true" : "false") << '\n';
    } else if (opt->count() > 0) {
      for (const auto& v : opt->results()) m << "option." << name << '=' << v << '\n';
    } else if (!opt->get_default_str().empty()) {
      m << "option." << name << '=' << opt->get_default_str() << '\n';
    }
  }
  return m.str();
}

void write_manifest(const fs::path& output, const CLI::App& sub) {
  fs::path path = output;
  path += ".manifest";
  const std::string text = manifest_text(sub);
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// Rebuilds the argument vector recorded in a manifest.
std::vector<std::string> manifest_args(const fs::path& path, const CLI::App& app) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest '" + path.string() + "'");
  std::string line;
  std::string subcommand;
  std::vector<std::pair<std::string, std::string>> options;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("manifest: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "subcommand") {
      subcommand = value;
    } else if (key.rfind("option.", 0) == 0) {
      options.emplace_back(key.substr(7), value);
    }
  }
  if (subcommand.empty() || subcommand == "rerun")
    throw UsageError("manifest: missing or invalid subcommand");
  const CLI::App* sub = app.get_subcommand(subcommand);
  std::vector<std::string> args{subcommand};
  for (const auto& [name, value] : options) {
    const CLI::Option* opt = sub->get_option_no_throw("--" + name);
    if (opt == nullptr) throw UsageError("manifest: unknown option '" + name + "'");
    if (opt->get_expected_min() == 0) {
      if (value == "true") args.push_back("--" + name);
    } else {
      args.push_back("--" + name);
      args.push_back(value);
    }
  }
  return args;
}

std::vector<Record> load_inputs(const std::string& path, const ModelConfig& config,
                                const std::string& map_flag) {
  const auto vectors = read_embeddings(path);
  auto records = to_records(vectors);
  if (config.input_kind == InputKind::kMap) {
    const auto grid = parse_grid(map_flag);
    if (!grid) throw UsageError("--map HxW is required for map-input models");
    records = reshape_to_maps(records, grid->first, grid->second);
  } else if (!map_flag.empty()) {
    throw UsageError("--map given but the model takes vector inputs");
  }
  return records;
}

int cmd_gen_data(const GenDataArgs& a, const CLI::App& sub, std::ostream& out) {
  ClusterOptions o;
  o.num_classes = a.classes;
  o.per_class = a.per_class;
  o.dim = a.dim;
  o.separation = a.separation;
  o.spread = a.spread;
  o.seed = a.seed;
  o.split_fraction = a.split;
  if (a.classes < 2 || a.per_class < 2 || a.dim < 1 || !(a.split > 0.0 && a.split < 1.0))
    throw UsageError("gen-data: need --classes >= 2, --per-class >= 2, --dim >= 1, 0 < --split < 1");
  auto [train, test] = generate_clusters(o);
  fs::create_directories(a.out);
  const fs::path train_path = fs::path(a.out) / "train.tdml";
  const fs::path test_path = fs::path(a.out) / "test.tdml";
  write_embeddings(train_path, to_vector_records(train.records));
  write_embeddings(test_path, to_vector_records(test.records));
  write_manifest(fs::path(a.out) / "gen-data", sub);
  out << "wrote " << train.records.size() << " records to " << train_path.string() << '\n'
      << "wrote " << test.records.size() << " records to " << test_path.string() << '\n';
  return 0;
}

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  if (a.per_class < 2 || a.batch % a.per_class != 0 || a.batch / a.per_class < 2) {
    throw UsageError("train: --batch must be a multiple of --per-class-batch with at least 2 classes");
  }
  LossNormalization norm;
  try {
    norm = parse_normalization(a.norm);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const auto vectors = read_embeddings(a.train);
  if (vectors.empty()) throw std::runtime_error("train: empty training file");

  ModelConfig config;
  config.dense_dims = parse_dims(a.dense);
  const auto grid = parse_grid(a.map);
  if (grid) {
    const std::size_t cells = grid->first * grid->second;
    if (vectors.front().values.size() % cells != 0)
      throw UsageError("--map: record length is not a multiple of H*W");
    config.input_kind = InputKind::kMap;
    config.input_dim = vectors.front().values.size() / cells;
  } else {
    config.input_dim = vectors.front().values.size();
  }
  if (a.conv > 0) config.conv_channels = a.conv;
  if (a.fc_reduce > 0) config.fc_reduction = a.fc_reduce;
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto records = load_inputs(a.train, config, a.map);

  TrainConfig tc;
  tc.margin = a.margin;
  tc.adam = {a.lr, a.beta1, a.beta2, a.adam_eps};
  tc.epochs = a.epochs;
  tc.samples_per_class = a.per_class;
  tc.classes_per_batch = a.batch / a.per_class;
  tc.normalization = norm;
  tc.flip_augment = !a.no_flip;
  tc.seed = a.seed;
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::optional<ParamSet> initial;
  if (!a.warm_start.empty()) {
    const Checkpoint prior = load_checkpoint(a.warm_start);
    initial = warm_start(init_params(config, a.seed), prior.params);
  }

  TrainHooks hooks;
  hooks.progress = &err;
  if (a.save_every_epoch) {
    hooks.on_epoch_end = [&](std::size_t epoch, const ParamSet& params) {
      fs::path p = a.out;
      p += ".epoch" + std::to_string(epoch);
      save_checkpoint(p, Checkpoint{config, params, std::nullopt});
    };
  }
  const TrainResult result = train(records, config, tc, std::move(initial), hooks);
  save_checkpoint(a.out, Checkpoint{config, result.params, std::nullopt});

  std::string history = "epoch,loss,active_fraction\n";
  char buf[96];
  for (const auto& e : result.history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e.epoch, e.mean_loss, e.active_fraction);
    history += buf;
  }
  const fs::path history_path = a.history.empty() ? fs::path(a.out + ".history.csv") : fs::path(a.history);
  write_file_atomic(history_path,
                    std::span(reinterpret_cast<const std::uint8_t*>(history.data()), history.size()));
  write_manifest(a.out, sub);
  out << "wrote checkpoint " << a.out << " (" << result.params.size() << " parameters, "
      << result.history.size() << " epochs)\n";
  return 0;
}

int cmd_embed(const EmbedArgs& a, const CLI::App& sub, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto records = load_inputs(a.in, ck.config, a.map);
  if (records.empty()) throw std::runtime_error("embed: empty input file");
  const Model model(ck.config);
  Matrix emb = model.embed(ck.params, records);
  if (a.apply_pca) {
    if (!ck.pca) throw std::runtime_error("embed: checkpoint has no PCA model");
    emb = pca_transform(*ck.pca, emb, true);
  }
  std::vector<VectorRecord> rows;
  rows.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto r = emb.row(i);
    rows.push_back({records[i].id, records[i].label, {r.begin(), r.end()}});
  }
  write_embeddings(a.out, rows);
  write_manifest(a.out, sub);
  out << "wrote " << rows.size() << " embeddings of dim " << emb.cols() << " to " << a.out << '\n';
  return 0;
}

Matrix stack(const std::vector<VectorRecord>& rows) {
  if (rows.empty()) throw std::runtime_error("empty embedding file");
  Matrix m(rows.size(), rows.front().values.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].values.begin(), rows[i].values.end(), m.row(i).begin());
  return m;
}

int cmd_pca(const PcaArgs& a, const CLI::App& sub, std::ostream& out) {
  if (a.apply.size() != a.out.size())
    throw UsageError("pca: each --apply needs a matching --out");
  if (a.checkpoint.empty() != a.checkpoint_out.empty())
    throw UsageError("pca: --checkpoint and --checkpoint-out go together");
  const auto fit_rows = read_embeddings(a.fit);
  const Matrix fit = stack(fit_rows);
  if (a.k < 1 || a.k > fit.cols()) {
    throw UsageError("pca: --k " + std::to_string(a.k) + " must lie in [1, " +
                     std::to_string(fit.cols()) + "]");
  }
  if (a.k > fit.rows() - 1) {
    throw UsageError("pca: --k " + std::to_string(a.k) + " needs at least " +
                     std::to_string(a.k + 1) + " fit records");
  }
  const PcaModel model = pca_fit(fit, a.k);
  for (std::size_t f = 0; f < a.apply.size(); ++f) {
    const auto rows = read_embeddings(a.apply[f]);
    const Matrix y = pca_transform(model, stack(rows), !a.no_renorm);
    std::vector<VectorRecord> reduced;
    reduced.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto r = y.row(i);
      reduced.push_back({rows[i].id, rows[i].label, {r.begin(), r.end()}});
    }
    write_embeddings(a.out[f], reduced);
    write_manifest(a.out[f], sub);
    out << "wrote " << reduced.size() << " reduced embeddings of dim " << a.k << " to " << a.out[f]
        << '\n';
  }
  if (!a.checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(a.checkpoint);
    ck.pca = model;
    save_checkpoint(a.checkpoint_out, ck);
    write_manifest(a.checkpoint_out, sub);
  }
  return 0;
}

int cmd_evaluate(const EvaluateArgs& a, const CLI::App& sub, std::ostream& out) {
  const auto rows = read_embeddings(a.in);
  const EmbeddingIndex index = EmbeddingIndex::build(rows);
  EvaluateOptions opts;
  opts.threads = a.threads;
  opts.nmrr.ng_factor = a.ng_factor;
  opts.nmrr.cap_by_gtm = !a.no_gtm_cap;
  if (a.gtm > 0) opts.gtm = a.gtm;
  const MetricsReport report = evaluate(index, rows, opts);
  const std::string text = a.json ? report_to_json(report) + "\n" : format_report(report);
  out << text;
  if (!a.out.empty()) {
    write_file_atomic(a.out, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    write_manifest(a.out, sub);
  }
  return 0;
}

void add_threads(CLI::App* sub, unsigned& threads) {
  sub->add_option("--threads", threads, "Worker threads (1 = reference mode)")
      ->check(CLI::Range(1u, 256u));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Triplet metric-learning retrieval toolkit", "tdml"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate synthetic clustered train/test files");
  gen_cmd->add_option("--classes", gen.classes, "Number of classes");
  gen_cmd->add_option("--per-class", gen.per_class, "Records per class");
  gen_cmd->add_option("--dim", gen.dim, "Vector dimension");
  gen_cmd->add_option("--separation", gen.separation, "Radius of the class-center sphere");
  gen_cmd->add_option("--spread", gen.spread, "Noise standard deviation");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--split", gen.split, "Training fraction per class");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train an embedding network with batch-all triplet loss");
  train_cmd->add_option("--train", tr.train, "Training TDML file")->required();
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--history", tr.history, "History CSV (default <out>.history.csv)");
  train_cmd->add_option("--margin", tr.margin, "Triplet margin")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--epochs", tr.epochs, "Epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", tr.batch, "Batch size P*K");
  train_cmd->add_option("--per-class-batch", tr.per_class, "Samples per class in a batch (K)");
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--beta1", tr.beta1, "Adam beta1");
  train_cmd->add_option("--beta2", tr.beta2, "Adam beta2");
  train_cmd->add_option("--adam-eps", tr.adam_eps, "Adam epsilon");
  train_cmd->add_option("--norm", tr.norm, "Loss normalization: sum, mean_valid, mean_active");
  train_cmd->add_option("--seed", tr.seed, "Random seed");
  train_cmd->add_option("--dense", tr.dense, "Dense layer widths, e.g. 32,16");
  train_cmd->add_option("--conv", tr.conv, "3x3 conv output channels (0 = none; map inputs)");
  train_cmd->add_option("--fc-reduce", tr.fc_reduce, "Reduction layer width (0 = none)");
  train_cmd->add_option("--map", tr.map, "Treat records as HxWxC maps, e.g. 4x4");
  train_cmd->add_flag("--no-flip", tr.no_flip, "Disable flip augmentation");
  train_cmd->add_option("--warm-start", tr.warm_start, "Initialize matching layers from a checkpoint");
  train_cmd->add_flag("--save-every-epoch", tr.save_every_epoch, "Write <out>.epochN checkpoints");
  add_threads(train_cmd, tr.threads);

  EmbedArgs em;
  auto* embed_cmd = app.add_subcommand("embed", "Compute normalized embeddings for a dataset");
  embed_cmd->add_option("--checkpoint", em.checkpoint, "Checkpoint path")->required();
  embed_cmd->add_option("--in", em.in, "Input TDML file")->required();
  embed_cmd->add_option("--out", em.out, "Output TDML file")->required();
  embed_cmd->add_option("--map", em.map, "Treat records as HxWxC maps");
  embed_cmd->add_flag("--apply-pca", em.apply_pca, "Project with the checkpoint's PCA model");
  add_threads(embed_cmd, em.threads);

  PcaArgs pc;
  auto* pca_cmd = app.add_subcommand("pca", "Fit PCA on one embedding file and apply it to others");
  pca_cmd->add_option("--fit", pc.fit, "Embeddings to fit on (training split)")->required();
  pca_cmd->add_option("--apply", pc.apply, "Embedding files to reduce")->required()->take_all();
  pca_cmd->add_option("--out", pc.out, "Output files, one per --apply")->required()->take_all();
  pca_cmd->add_option("--k", pc.k, "Output dimension")->required();
  pca_cmd->add_flag("--no-renorm", pc.no_renorm, "Skip L2 renormalization after projection");
  pca_cmd->add_option("--checkpoint", pc.checkpoint, "Checkpoint to attach the PCA model to");
  pca_cmd->add_option("--checkpoint-out", pc.checkpoint_out, "Where to write that checkpoint");

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Self-retrieval metrics of an embedding file");
  eval_cmd->add_option("--in", ev.in, "Embedding TDML file")->required();
  eval_cmd->add_option("--out", ev.out, "Also write the report here");
  eval_cmd->add_flag("--json", ev.json, "JSON output");
  eval_cmd->add_option("--gtm", ev.gtm, "Override GTM (0 = max NG over queries)");
  eval_cmd->add_option("--ng-factor", ev.ng_factor, "K(q) multiplier of NG(q)")->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--no-gtm-cap", ev.no_gtm_cap, "Use K(q) = ng-factor * NG(q) only");
  add_threads(eval_cmd, ev.threads);

  ConvertArgs imp;
  auto* import_cmd = app.add_subcommand("import-csv", "Convert id,label,f0.. CSV to TDML");
  import_cmd->add_option("--in", imp.in, "CSV file")->required();
  import_cmd->add_option("--out", imp.out, "TDML file")->required();

  ConvertArgs exp;
  auto* export_cmd = app.add_subcommand("export-csv", "Convert TDML to CSV");
  export_cmd->add_option("--in", exp.in, "TDML file")->required();
  export_cmd->add_option("--out", exp.out, "CSV file")->required();

  std::string manifest;
  auto* rerun_cmd = app.add_subcommand("rerun", "Repeat the run recorded in a manifest");
  rerun_cmd->add_option("manifest", manifest, "Manifest file")->required();

  std::vector<std::string> argv = args;
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (rerun_cmd->parsed()) return run(manifest_args(manifest, app), out, err);
    if (gen_cmd->parsed()) return cmd_gen_data(gen, *gen_cmd, out);
    if (train_cmd->parsed()) return cmd_train(tr, *train_cmd, out, err);
    if (embed_cmd->parsed()) return cmd_embed(em, *embed_cmd, out);
    if (pca_cmd->parsed()) return cmd_pca(pc, *pca_cmd, out);
    if (eval_cmd->parsed()) return cmd_evaluate(ev, *eval_cmd, out);
    if (import_cmd->parsed()) {
      const auto rows = import_csv(imp.in);
      write_embeddings(imp.out, rows);
      write_manifest(imp.out, *import_cmd);
      out << "wrote " << rows.size() << " records to " << imp.out << '\n';
      return 0;
    }
    if (export_cmd->parsed()) {
      export_csv(exp.out, read_embeddings(exp.in));
      write_manifest(exp.out, *export_cmd);
      return 0;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const NoValidTripletError& e) {
    err << "error: no valid triplet: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace tdml::cli
