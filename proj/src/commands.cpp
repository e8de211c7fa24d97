#include "varcon/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "varcon/config.hpp"
#include "varcon/data.hpp"
#include "varcon/eval.hpp"
#include "varcon/grad.hpp"
#include "varcon/train.hpp"

namespace varcon {

void save_embedding_dump(const EmbeddingBatch& batch, const std::filesystem::path& path) {
  if (batch.labels.size() != batch.size()) throw ShapeMismatch("labels do not match rows");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "label";
  for (std::size_t j = 0; j < batch.dim(); ++j) out << ",z" << j;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out << batch.labels[i];
    for (double v : batch.vectors.row(i)) {
      std::snprintf(buf, sizeof buf, "%.9g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

EmbeddingBatch load_embedding_dump(const std::filesystem::path& path) {
  // Same column layout as the dataset CSV; only the header prefix differs.
  const LabeledDataset ds = load_csv(path);
  return EmbeddingBatch{ds.samples, ds.labels};
}

namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kOutputDirEnv = "VARCON_OUTPUT_DIR";

// Config file first, then any --key flags given on the command line, then the
// output directory override from the environment.
struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value run configuration file");
    for (const auto& key : config_keys())
      options[key] = cmd->add_option("--" + key, values[key])->group("Run configuration");
  }

  RunConfig resolve() const {
    Settings settings;
    if (!config_path.empty()) settings = read_settings_file(config_path);
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) settings[key] = values.at(key);
    if (const char* dir = std::getenv(kOutputDirEnv); dir && *dir) settings["output_dir"] = dir;
    return config_from_settings(settings);
  }
};

EmbeddingBatch embed_split(const MlpEncoder& encoder, const Datasets& data,
                           const std::string& split) {
  if (encoder.input_dim() != data.train.input_dim())
    throw DimMismatch("checkpoint expects input width " + std::to_string(encoder.input_dim()) +
                      " but the dataset has " + std::to_string(data.train.input_dim()));
  if (split == "train") return embed_dataset(encoder, data.train);
  if (split == "val") return embed_dataset(encoder, data.val);
  if (split == "all") {
    EmbeddingBatch a = embed_dataset(encoder, data.train);
    const EmbeddingBatch b = embed_dataset(encoder, data.val);
    Matrix both(a.size() + b.size(), a.dim());
    std::copy(a.vectors.flat().begin(), a.vectors.flat().end(), both.flat().begin());
    std::copy(b.vectors.flat().begin(), b.vectors.flat().end(), both.row(a.size()).begin());
    a.vectors = std::move(both);
    a.labels.insert(a.labels.end(), b.labels.begin(), b.labels.end());
    return a;
  }
  throw ConfigError("split must be train, val or all");
}

Json cluster_report(const EmbeddingBatch& emb) {
  const std::size_t clusters = emb.num_classes_present();
  const auto labels = ward_cluster(emb.vectors, clusters);
  const ClusteringReport r = clustering_metrics(emb.labels, labels);
  Json j;
  j["mode"] = "cluster";
  j["num_points"] = emb.size();
  j["num_clusters"] = clusters;
  j["ari"] = r.ari;
  j["nmi"] = r.nmi;
  j["homogeneity"] = r.homogeneity;
  j["completeness"] = r.completeness;
  j["v_measure"] = r.v_measure;
  j["purity"] = r.purity;
  return j;
}

Json knn_report(const EmbeddingBatch& refs, const EmbeddingBatch& queries, std::size_t k) {
  const KnnResult r = knn_classify(refs, queries, KnnConfig{k});
  Json j;
  j["mode"] = "knn";
  j["k"] = k;
  j["num_refs"] = refs.size();
  j["num_queries"] = queries.size();
  j["accuracy"] = r.accuracy;
  return j;
}

int cmd_train(const ConfigOptions& opts, std::ostream& out, std::ostream& err) {
  const RunConfig config = opts.resolve();
  for (const auto& w : config.validate()) err << "warning: " << w << '\n';
  const Datasets data = load_datasets(config);
  const TrainResult result = train_to_directory(config, data);

  Json j;
  j["steps"] = result.metrics.size();
  j["final_loss"] = result.metrics.empty() ? Json(nullptr) : Json(result.metrics.back().loss);
  j["final_epsilon"] = result.epsilon;
  const auto refs = embed_dataset(result.encoder, data.train);
  const auto queries = embed_dataset(result.encoder, data.val);
  j["knn10_val_accuracy"] =
      knn_classify(refs, queries, KnnConfig{std::min<std::size_t>(10, refs.size())}).accuracy;
  j["output_dir"] = config.output_dir.string();
  out << j.dump() << '\n';
  return kExitOk;
}

int cmd_grad_check(const GradCheckOptions& options, std::ostream& out) {
  const GradCheckResult r = run_grad_check(options);
  const bool pass = r.max_rel_error < options.tolerance;
  Json j;
  j["pass"] = pass;
  j["num_probes"] = r.num_probes;
  j["max_rel_error"] = r.max_rel_error;
  j["max_rel_error_z"] = r.max_rel_error_z;
  j["max_rel_error_epsilon"] = r.max_rel_error_eps;
  j["max_abs_error"] = r.max_abs_error;
  j["worst_instance_seed"] = r.worst_instance_seed;
  j["tolerance"] = options.tolerance;
  out << j.dump() << '\n';
  return pass ? kExitOk : kExitVerification;
}

int cmd_export(const ConfigOptions& opts, const std::string& checkpoint, const std::string& split,
               const std::string& out_path, std::ostream& out) {
  const RunConfig config = opts.resolve();
  config.validate();
  const MlpEncoder encoder = MlpEncoder::load(checkpoint);
  const Datasets data = load_datasets(config);
  const EmbeddingBatch emb = embed_split(encoder, data, split);
  const std::filesystem::path path =
      out_path.empty() ? config.output_dir / ("embeddings_" + split + ".csv")
                       : std::filesystem::path(out_path);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_embedding_dump(emb, path);
  Json j;
  j["rows"] = emb.size();
  j["dim"] = emb.dim();
  j["path"] = path.string();
  out << j.dump() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string mode = "knn";
  std::string checkpoint;
  std::string split = "val";
  std::string embeddings;
  std::string query_embeddings;
  std::string report_path;
  std::size_t k = 10;
  std::size_t per_class_n = 5;
  std::size_t repeats = 5;
  std::uint64_t fewshot_seed = 17;
};

int cmd_eval(const ConfigOptions& opts, const EvalArgs& args, std::ostream& out) {
  Json report;
  if (args.mode == "fewshot") {
    const RunConfig config = opts.resolve();
    config.validate();
    const Datasets data = load_datasets(config);
    const auto queries_of = [&](const MlpEncoder& enc) { return embed_dataset(enc, data.val); };
    const FewShotReport r = few_shot_eval(
        data.train, args.per_class_n, args.repeats, args.fewshot_seed,
        [&](const LabeledDataset& part, std::uint64_t seed) {
          RunConfig c = config;
          c.init_seed = mix_seed(config.init_seed, seed);
          c.shuffle_seed = mix_seed(config.shuffle_seed, seed);
          TrainResult t = train(c, Datasets{part, data.val});
          return std::make_pair(std::move(t.encoder), part);
        },
        [&](const std::pair<MlpEncoder, LabeledDataset>& model) {
          const auto refs = embed_dataset(model.first, model.second);
          return knn_classify(refs, queries_of(model.first),
                              KnnConfig{std::min(args.k, refs.size())})
              .accuracy;
        });
    report["mode"] = "fewshot";
    report["per_class_n"] = r.per_class_n;
    report["repeats"] = r.repeats;
    report["k"] = args.k;
    report["mean"] = r.mean;
    report["stderr"] = r.stderr_;
    report["accuracies"] = r.accuracies;
  } else if (args.mode == "knn" || args.mode == "cluster") {
    EmbeddingBatch refs, queries;
    if (!args.embeddings.empty()) {
      refs = load_embedding_dump(args.embeddings);
      queries = args.query_embeddings.empty() ? refs : load_embedding_dump(args.query_embeddings);
    } else {
      if (args.checkpoint.empty()) throw ConfigError("eval needs --checkpoint or --embeddings");
      const RunConfig config = opts.resolve();
      config.validate();
      const MlpEncoder encoder = MlpEncoder::load(args.checkpoint);
      const Datasets data = load_datasets(config);
      refs = embed_split(encoder, data, "train");
      queries = embed_split(encoder, data, args.split);
    }
    report = args.mode == "knn" ? knn_report(refs, queries, args.k) : cluster_report(queries);
  } else {
    throw ConfigError("mode must be knn, cluster or fewshot");
  }
  const std::string line = report.dump();
  out << line << '\n';
  if (!args.report_path.empty()) std::ofstream(args.report_path, std::ios::trunc) << line << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"VarCon representation-learning toolkit"};
  app.require_subcommand(1);

  ConfigOptions train_opts, export_opts, eval_opts;
  auto* train_cmd = app.add_subcommand("train", "train an encoder and write metrics + checkpoint");
  train_opts.attach(train_cmd);

  GradCheckOptions gc;
  std::string corrupt = "none";
  auto* gc_cmd = app.add_subcommand("grad-check", "compare analytic and finite-difference gradients");
  gc_cmd->add_option("--probes", gc.probes, "number of seeded instances")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--seed", gc.seed, "first instance seed");
  gc_cmd->add_option("--fd-step", gc.h, "finite-difference step")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--tolerance", gc.tolerance, "max relative error to pass");
  gc_cmd->add_option("--corrupt", corrupt, "inject a known gradient defect")
      ->check(CLI::IsMember({"none", "scale_attraction", "drop_target_chain"}));

  std::string checkpoint, split = "val", out_path;
  auto* export_cmd = app.add_subcommand("export-embeddings", "write embeddings as CSV");
  export_opts.attach(export_cmd);
  export_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  export_cmd->add_option("--split", split, "train, val or all");
  export_cmd->add_option("--out", out_path, "output CSV path");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate embeddings (knn, cluster, fewshot)");
  eval_opts.attach(eval_cmd);
  eval_cmd->add_option("--mode", eval_args.mode)->check(CLI::IsMember({"knn", "cluster", "fewshot"}));
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file");
  eval_cmd->add_option("--split", eval_args.split, "query split: train, val or all");
  eval_cmd->add_option("--embeddings", eval_args.embeddings, "embedding dump (refs for knn)");
  eval_cmd->add_option("--query-embeddings", eval_args.query_embeddings, "embedding dump of queries");
  eval_cmd->add_option("--k", eval_args.k, "neighbours for knn")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--per-class-n", eval_args.per_class_n, "few-shot samples per class");
  eval_cmd->add_option("--repeats", eval_args.repeats, "few-shot repetitions");
  eval_cmd->add_option("--fewshot-seed", eval_args.fewshot_seed);
  eval_cmd->add_option("--report", eval_args.report_path, "also write the JSON report here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_opts, out, err);
    if (*gc_cmd) {
      if (corrupt == "scale_attraction") gc.corruption = GradCorruption::scale_attraction;
      if (corrupt == "drop_target_chain") gc.corruption = GradCorruption::drop_target_chain;
      return cmd_grad_check(gc, out);
    }
    if (*export_cmd) return cmd_export(export_opts, checkpoint, split, out_path, out);
    if (*eval_cmd) return cmd_eval(eval_opts, eval_args, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace varcon
