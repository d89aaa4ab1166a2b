// pamtriage: command-line front end for the triage workbench.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "pamtriage/classify.hpp"
#include "pamtriage/embedding_io.hpp"
#include "pamtriage/error.hpp"
#include "pamtriage/eval.hpp"
#include "pamtriage/pipeline.hpp"
#include "pamtriage/reduce.hpp"
#include "pamtriage/service.hpp"
#include "pamtriage/store.hpp"
#include "pamtriage/synth.hpp"
#include "pamtriage/umap.hpp"

namespace fs = std::filesystem;
using namespace pamtriage;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> split_fractions(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_csv(s)) out.push_back(std::stod(item));
  if (out.size() != 3) throw Error(ErrorKind::InvalidArgument, "--split needs train,val,test fractions");
  return out;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string in;
  std::string manifest;
  IngestOptions opts;
};

void cmd_ingest(const IngestArgs& a) {
  FeatureConfig features;
  features.sample_rate = a.opts.rate;
  features.fmax = a.opts.rate / 2.0;
  const auto manifest = ingest(a.in, a.opts, features);
  write_manifest(a.manifest, manifest);
  std::cerr << "ingest: " << manifest.size() << " snippets from " << manifest.clip_snippet_counts().size()
            << " clips -> " << a.manifest << "\n";
}

struct EmbedArgs {
  std::string manifest;
  std::string out;
  std::string import_path;
};

void cmd_embed(const EmbedArgs& a) {
  const auto manifest = read_manifest(a.manifest);
  std::vector<Embedding> embeddings;
  if (!a.import_path.empty()) {
    embeddings = import_embeddings(a.import_path);
    std::size_t unknown = 0;
    for (const auto& e : embeddings) unknown += manifest.contains(e.ref) ? 0 : 1;
    if (unknown > 0) {
      throw Error(ErrorKind::UnknownSnippet, std::to_string(unknown) + " imported rows are not in the manifest");
    }
  } else {
    FeatureConfig cfg;
    if (!manifest.entries().empty()) {
      cfg.sample_rate = manifest.entries().front().rate;
      cfg.fmax = cfg.sample_rate / 2.0;
    }
    embeddings = embed_manifest(manifest, cfg);
  }
  write_embeddings(a.out, embeddings);
  std::cerr << "embed: " << embeddings.size() << " embeddings -> " << a.out << "\n";
}

struct ReduceArgs {
  std::string emb;
  std::string method = "pca";
  std::size_t k = 2;
  UmapConfig umap;
  double sample_fraction = 1.0;
  std::string out;
};

void cmd_reduce(const ReduceArgs& a) {
  auto embeddings = read_embeddings(a.emb);
  if (a.sample_fraction < 1.0) embeddings = sample_subset<Embedding>(embeddings, a.sample_fraction, a.umap.seed);
  const auto method = parse_projection_method(a.method);
  const ProjectionSet proj = method == ProjectionMethod::pca ? pca_projection(embeddings, a.k)
                                                             : umap_fit(embeddings, a.umap);
  write_projection(a.out, proj);
  std::cerr << "reduce: " << proj.points.size() << " points (" << a.method << ") -> " << a.out << "\n";
}

struct DetectArgs {
  std::string manifest;
  std::string tpl;
  PeakOptions peaks;
  std::string class_name = "airgun";
  std::string out;
  std::string events_out;
};

void cmd_detect(const DetectArgs& a) {
  const auto manifest = read_manifest(a.manifest);
  if (manifest.size() == 0) throw Error(ErrorKind::InvalidArgument, "manifest is empty");
  const std::uint32_t rate = manifest.entries().front().rate;
  AudioClip tpl_clip = resample(load_wav(a.tpl), rate);
  const Template tpl{std::move(tpl_clip.samples), rate, a.class_name};
  const auto events = detect_manifest(manifest, tpl, a.peaks);
  const auto proposals = propose_labels(events, a.class_name, manifest);
  write_label_records(a.out, proposals);
  if (!a.events_out.empty()) {
    std::vector<nlohmann::json> rows;
    for (const auto& e : events) {
      rows.push_back({{"clip_id", e.clip_id}, {"offset_s", e.offset_s}, {"score", e.score},
                      {"template_name", e.template_name}});
    }
    write_jsonl(a.events_out, rows);
  }
  std::cerr << "detect: " << events.size() << " events, " << proposals.size() << " proposals -> " << a.out << "\n";
}

struct TrainArgs {
  std::string emb;
  std::string labels;
  std::string classes;
  std::string split = "0.8,0.1,0.1";
  TrainConfig cfg;
  std::string out;
  std::string test_out;
};

void cmd_train(const TrainArgs& a) {
  const auto embeddings = read_embeddings(a.emb);
  const auto classes = split_csv(a.classes);
  const auto fr = split_fractions(a.split);
  SplitSpec spec{fr[0], fr[1], fr[2], a.cfg.seed, true};
  std::vector<LabeledRef> labeled;
  for (const auto& [ref, cls] : truth_from_labels(read_label_records(a.labels))) labeled.push_back({ref, cls});
  auto run = train_run(embeddings, labeled, classes, spec, a.cfg);
  save_model(a.out, run.model);
  if (!a.test_out.empty()) {
    fs::create_directories(a.test_out);
    write_predictions(fs::path(a.test_out) / "test_predictions.jsonl", run.model, run.test_predictions);
    std::vector<LabelRecord> truth;
    for (const auto& [ref, cls] : run.test_truth) {
      truth.push_back({ref.clip_id, ref.index, cls, LabelState::accepted, Provenance::import, "split", now_iso8601()});
    }
    write_label_records(fs::path(a.test_out) / "test_truth.jsonl", truth);
  }
  std::cerr << "train: " << run.split.train.size() << "/" << run.split.val.size() << "/" << run.split.test.size()
            << " train/val/test, best epoch " << run.model.train_meta.value("best_epoch", 0) << " -> " << a.out
            << "\n";
}

void cmd_predict(const std::string& model_path, const std::string& emb, const std::string& out) {
  const auto model = load_model(model_path);
  const auto embeddings = read_embeddings(emb);
  const auto preds = predict_all(model, embeddings);
  write_predictions(out, model, preds);
  std::cerr << "predict: " << preds.size() << " rows -> " << out << "\n";
}

struct EvalArgs {
  std::string preds;
  std::string labels;
  std::string target = "airgun";
  std::string sweep = "0.01:1.0:0.01";
  std::string out = "report";
};

void cmd_eval(const EvalArgs& a) {
  const auto preds = read_predictions(a.preds);
  const auto truth = truth_from_labels(read_label_records(a.labels));
  // Snippets without a truth label count as belonging to no target class.
  ClassAssignments covered;
  for (const auto& row : preds.rows) {
    const auto it = truth.find(row.ref);
    covered[row.ref] = it == truth.end() ? std::string() : it->second;
  }
  const auto curve = sweep(preds, covered, a.target, parse_tau_grid(a.sweep));
  const auto am = prf(confusion(argmax_decisions(preds), covered, a.target));
  report(curve, a.out,
         {{"target", a.target}, {"argmax", {{"precision", am.precision}, {"recall", am.recall}, {"f1", am.f1}}}});
  std::cout << "best_tau " << curve.best_tau << " f1 " << curve.best_f1 << " (argmax f1 " << am.f1 << ")\n";
}

struct LabelArgs {
  std::string manifest;
  std::string labels = "labels.jsonl";
  std::string clip;
  std::uint32_t index = 0;
  std::string class_name;
  std::string annotator = "cli";
  std::string in;
};

void cmd_label_set(const LabelArgs& a, LabelState state) {
  LabelStore store(read_manifest(a.manifest), a.labels);
  const auto result = store.upsert(
      {a.clip, a.index, a.class_name, state, Provenance::human, a.annotator, now_iso8601()});
  print_json({{"changed", result.changed}, {"record", result.record}});
}

void cmd_label_list(const LabelArgs& a) {
  LabelStore store(read_manifest(a.manifest), a.labels);
  for (const auto& rec : store.snapshot()) {
    if (!a.class_name.empty() && rec.class_name != a.class_name) continue;
    std::cout << nlohmann::json(rec).dump() << "\n";
  }
}

void cmd_label_import(const LabelArgs& a) {
  LabelStore store(read_manifest(a.manifest), a.labels);
  std::size_t changed = 0;
  const auto records = read_label_records(a.in);
  for (const auto& rec : records) changed += store.upsert(rec).changed ? 1 : 0;
  std::cerr << "labels import: " << changed << " of " << records.size() << " records changed state\n";
}

struct ExportArgs {
  std::string manifest;
  std::string labels = "labels.jsonl";
  std::string classes;
  ExportOptions opts;
  std::string out;
};

void cmd_export(ExportArgs a) {
  LabelStore store(read_manifest(a.manifest), a.labels);
  a.opts.classes = split_csv(a.classes);
  const auto result = export_training_set(store, a.opts);
  if (!a.out.empty()) {
    const auto records = result.as_records();
    write_label_records(a.out, records);
  }
  print_json(result.report());
}

Service* g_service = nullptr;

void cmd_serve(const std::string& host, int port, const std::string& data_dir, const std::string& ui) {
  Service service({data_dir, ui, 200000});
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::cerr << "serve: http://" << host << ":" << port << " (data " << data_dir << ")\n";
  service.listen(host, port);
  g_service = nullptr;
}

struct SynthArgs {
  synth::CorpusSpec spec;
  std::string out = "synthetic";
  std::uint32_t template_rate = 22050;
};

void cmd_synth(const SynthArgs& a) {
  const auto corpus = synth::generate_corpus(a.spec);
  synth::write_corpus(corpus, a.out);
  write_wav_pcm16(fs::path(a.out) / "airgun_template.wav", synth::airgun_pulse(a.template_rate, a.spec.airgun_template_seed),
                  a.template_rate);
  std::vector<LabelRecord> truth;
  for (const auto& e : corpus.events) {
    truth.push_back({corpus.clip.id, e.snippet, e.class_name, LabelState::accepted, Provenance::import, "synth",
                     now_iso8601()});
  }
  write_label_records(fs::path(a.out) / (corpus.clip.id + ".labels.jsonl"), truth);
  print_json(corpus.counts);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Passive acoustic monitoring triage workbench"};
  app.require_subcommand(1);

  IngestArgs ingest_args;
  auto* ingest_cmd = app.add_subcommand("ingest", "Segment WAV files into a snippet manifest");
  ingest_cmd->add_option("--in", ingest_args.in, "WAV file or directory")->required();
  ingest_cmd->add_option("--rate", ingest_args.opts.rate, "Target sample rate (Hz)")->capture_default_str();
  ingest_cmd->add_option("--duration", ingest_args.opts.duration_s, "Snippet length (s)")->capture_default_str();
  ingest_cmd->add_option("--overlap", ingest_args.opts.overlap_s, "Snippet overlap (s)")->capture_default_str();
  ingest_cmd->add_option("--manifest", ingest_args.manifest, "Output manifest (JSONL)")->required();

  EmbedArgs embed_args;
  auto* embed_cmd = app.add_subcommand("embed", "Compute snippet embeddings");
  embed_cmd->add_option("--manifest", embed_args.manifest)->required();
  embed_cmd->add_option("--out", embed_args.out)->required();
  embed_cmd->add_option("--import", embed_args.import_path, "Use embeddings from an exchange file instead");

  ReduceArgs reduce_args;
  auto* reduce_cmd = app.add_subcommand("reduce", "Project embeddings to 2-D");
  reduce_cmd->add_option("--emb", reduce_args.emb)->required();
  reduce_cmd->add_option("--method", reduce_args.method)->check(CLI::IsMember({"pca", "umap"}))->capture_default_str();
  reduce_cmd->add_option("--k", reduce_args.k, "PCA components fitted")->capture_default_str();
  reduce_cmd->add_option("--n-neighbors", reduce_args.umap.n_neighbors)->capture_default_str();
  reduce_cmd->add_option("--min-dist", reduce_args.umap.min_dist)->capture_default_str();
  reduce_cmd->add_option("--epochs", reduce_args.umap.n_epochs)->capture_default_str();
  reduce_cmd->add_option("--seed", reduce_args.umap.seed)->capture_default_str();
  reduce_cmd->add_option("--sample-fraction", reduce_args.sample_fraction, "Random subset to project")
      ->capture_default_str();
  reduce_cmd->add_option("--out", reduce_args.out)->required();

  DetectArgs detect_args;
  auto* detect_cmd = app.add_subcommand("detect", "Matched-filter detection into label proposals");
  detect_cmd->add_option("--manifest", detect_args.manifest)->required();
  detect_cmd->add_option("--template", detect_args.tpl, "Template WAV")->required();
  detect_cmd->add_option("--threshold", detect_args.peaks.threshold)->capture_default_str();
  detect_cmd->add_option("--min-sep", detect_args.peaks.min_separation_s)->capture_default_str();
  detect_cmd->add_option("--class", detect_args.class_name)->capture_default_str();
  detect_cmd->add_option("--out", detect_args.out)->required();
  detect_cmd->add_option("--events", detect_args.events_out, "Also write raw events (JSONL)");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the softmax head");
  train_cmd->add_option("--emb", train_args.emb)->required();
  train_cmd->add_option("--labels", train_args.labels, "Accepted label records (JSONL)")->required();
  train_cmd->add_option("--classes", train_args.classes, "Comma-separated class list")->required();
  train_cmd->add_option("--split", train_args.split)->capture_default_str();
  train_cmd->add_option("--seed", train_args.cfg.seed)->capture_default_str();
  train_cmd->add_option("--epochs", train_args.cfg.epochs)->capture_default_str();
  train_cmd->add_option("--batch", train_args.cfg.batch)->capture_default_str();
  train_cmd->add_option("--lr", train_args.cfg.lr)->capture_default_str();
  train_cmd->add_option("--l2", train_args.cfg.l2)->capture_default_str();
  train_cmd->add_option("--out", train_args.out)->required();
  train_cmd->add_option("--test-out", train_args.test_out, "Directory for held-out predictions and truth");

  std::string predict_model, predict_emb, predict_out;
  auto* predict_cmd = app.add_subcommand("predict", "Class probabilities for embeddings");
  predict_cmd->add_option("--model", predict_model)->required();
  predict_cmd->add_option("--emb", predict_emb)->required();
  predict_cmd->add_option("--out", predict_out)->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Threshold sweep against truth labels");
  eval_cmd->add_option("--preds", eval_args.preds)->required();
  eval_cmd->add_option("--labels", eval_args.labels)->required();
  eval_cmd->add_option("--target", eval_args.target)->capture_default_str();
  eval_cmd->add_option("--sweep", eval_args.sweep, "start:stop:step")->capture_default_str();
  eval_cmd->add_option("--out", eval_args.out)->capture_default_str();

  LabelArgs label_args;
  auto* labels_cmd = app.add_subcommand("labels", "Review label records");
  labels_cmd->require_subcommand(1);
  labels_cmd->add_option("--manifest", label_args.manifest)->required();
  labels_cmd->add_option("--labels", label_args.labels, "Label log")->capture_default_str();
  auto add_decision = [&](const char* name, const char* help) {
    auto* c = labels_cmd->add_subcommand(name, help);
    c->add_option("--clip", label_args.clip)->required();
    c->add_option("--index", label_args.index)->required();
    c->add_option("--class", label_args.class_name)->required();
    c->add_option("--annotator", label_args.annotator)->capture_default_str();
    return c;
  };
  auto* accept_cmd = add_decision("accept", "Accept a label");
  auto* reject_cmd = add_decision("reject", "Reject a label");
  auto* list_cmd = labels_cmd->add_subcommand("list", "Print current label states");
  list_cmd->add_option("--class", label_args.class_name, "Only this class");
  auto* import_cmd = labels_cmd->add_subcommand("import", "Apply records (e.g. detector proposals)");
  import_cmd->add_option("--in", label_args.in)->required();

  ExportArgs export_args;
  auto* export_cmd = app.add_subcommand("export", "Assemble a training set from accepted labels");
  export_cmd->add_option("--manifest", export_args.manifest)->required();
  export_cmd->add_option("--labels", export_args.labels)->capture_default_str();
  export_cmd->add_option("--classes", export_args.classes, "Comma-separated; empty means all");
  export_cmd->add_option("--min-count", export_args.opts.min_count)->capture_default_str();
  export_cmd->add_option("--background", export_args.opts.background_class)->capture_default_str();
  export_cmd->add_option("--background-ratio", export_args.opts.background_ratio)->capture_default_str();
  export_cmd->add_option("--seed", export_args.opts.seed)->capture_default_str();
  export_cmd->add_option("--out", export_args.out, "Exported records (JSONL)");

  std::string serve_host = "127.0.0.1", serve_dir = "./workspace", serve_ui;
  int serve_port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--host", serve_host)->capture_default_str();
  serve_cmd->add_option("--port", serve_port)->capture_default_str();
  serve_cmd->add_option("--data-dir", serve_dir)->capture_default_str();
  serve_cmd->add_option("--ui", serve_ui, "UI bundle directory");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic labeled corpus");
  synth_cmd->add_option("--out", synth_args.out)->capture_default_str();
  synth_cmd->add_option("--duration", synth_args.spec.duration_s)->capture_default_str();
  synth_cmd->add_option("--rate", synth_args.spec.rate)->capture_default_str();
  synth_cmd->add_option("--scale", synth_args.spec.class_scale, "Class count scale")->capture_default_str();
  synth_cmd->add_option("--seed", synth_args.spec.seed)->capture_default_str();
  synth_cmd->add_option("--clip-id", synth_args.spec.clip_id)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) cmd_ingest(ingest_args);
    else if (*embed_cmd) cmd_embed(embed_args);
    else if (*reduce_cmd) cmd_reduce(reduce_args);
    else if (*detect_cmd) cmd_detect(detect_args);
    else if (*train_cmd) cmd_train(train_args);
    else if (*predict_cmd) cmd_predict(predict_model, predict_emb, predict_out);
    else if (*eval_cmd) cmd_eval(eval_args);
    else if (*accept_cmd) cmd_label_set(label_args, LabelState::accepted);
    else if (*reject_cmd) cmd_label_set(label_args, LabelState::rejected);
    else if (*list_cmd) cmd_label_list(label_args);
    else if (*import_cmd) cmd_label_import(label_args);
    else if (*export_cmd) cmd_export(export_args);
    else if (*serve_cmd) cmd_serve(serve_host, serve_port, serve_dir, serve_ui);
    else if (*synth_cmd) cmd_synth(synth_args);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
