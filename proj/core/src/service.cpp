#include "pamtriage/service.hpp"

#include <atomic>
#include <charconv>
#include <condition_variable>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <thread>

#include <httplib.h>

#include "pamtriage/audio.hpp"
#include "pamtriage/classify.hpp"
#include "pamtriage/embedding_io.hpp"
#include "pamtriage/error.hpp"
#include "pamtriage/eval.hpp"
#include "pamtriage/pipeline.hpp"
#include "pamtriage/umap.hpp"

namespace pamtriage {

std::string_view to_string(JobKind k) {
  switch (k) {
    case JobKind::embed: return "embed";
    case JobKind::reduce: return "reduce";
    case JobKind::train: return "train";
    case JobKind::eval: return "eval";
  }
  return "embed";
}

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "queued";
}

JobKind parse_job_kind(std::string_view s) {
  if (s == "embed") return JobKind::embed;
  if (s == "reduce") return JobKind::reduce;
  if (s == "train") return JobKind::train;
  if (s == "eval") return JobKind::eval;
  throw Error(ErrorKind::InvalidArgument, "unknown job kind '" + std::string(s) + "'");
}

nlohmann::json to_json(const JobStatus& s) {
  nlohmann::json j{{"job_id", s.job_id},
                   {"kind", to_string(s.kind)},
                   {"state", to_string(s.state)},
                   {"progress", s.progress}};
  j["result_ref"] = s.result_ref ? nlohmann::json(*s.result_ref) : nlohmann::json(nullptr);
  if (s.error) j["error"] = *s.error;
  return j;
}

namespace {

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownSnippet:
    case ErrorKind::UnknownClip: return 404;
    case ErrorKind::IllegalTransition: return 409;
    case ErrorKind::InvalidArgument:
    case ErrorKind::ParseError:
    case ErrorKind::UnknownClass:
    case ErrorKind::EmptyGrid: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
  send_json(res, status, {{"error", kind}, {"message", message}});
}

std::optional<std::uint32_t> parse_index(const std::string& s) {
  std::uint32_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

template <typename T>
T param_or(const nlohmann::json& params, const char* key, T fallback) {
  if (!params.contains(key) || params[key].is_null()) return fallback;
  return params[key].get<T>();
}

std::vector<std::string> string_list(const nlohmann::json& params, const char* key) {
  if (!params.contains(key)) return {};
  const auto& v = params[key];
  if (v.is_array()) return v.get<std::vector<std::string>>();
  std::vector<std::string> out;
  std::string item;
  for (char c : v.get<std::string>()) {
    if (c == ',') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else {
      item.push_back(c);
    }
  }
  if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

struct Service::Impl {
  ServiceConfig config;
  Workspace ws;
  DatasetManifest manifest_copy;
  std::unique_ptr<LabelStore> labels;

  mutable std::shared_mutex projection_mutex;
  std::map<ProjectionMethod, std::shared_ptr<const ProjectionSet>> projections;

  std::mutex jobs_mutex;
  std::condition_variable jobs_cv;
  std::map<std::string, JobStatus> jobs;
  std::map<JobKind, std::string> active;  // kind -> job id of queued/running job
  std::vector<std::jthread> workers;
  std::uint64_t next_job = 1;

  httplib::Server server;
  std::thread server_thread;

  explicit Impl(ServiceConfig cfg) : config(std::move(cfg)), ws{config.data_dir} {
    std::filesystem::create_directories(ws.dir);
    if (std::filesystem::exists(ws.manifest())) manifest_copy = read_manifest(ws.manifest());
    labels = std::make_unique<LabelStore>(manifest_copy, ws.labels());
    for (auto m : {ProjectionMethod::pca, ProjectionMethod::umap}) {
      if (std::filesystem::exists(ws.projection(m))) {
        projections[m] = std::make_shared<const ProjectionSet>(read_projection(ws.projection(m)));
      }
    }
    routes();
  }

  std::shared_ptr<const ProjectionSet> projection(ProjectionMethod m) const {
    std::shared_lock lock(projection_mutex);
    const auto it = projections.find(m);
    return it == projections.end() ? nullptr : it->second;
  }

  void set_projection(ProjectionSet proj) {
    const auto method = proj.method;
    auto shared = std::make_shared<const ProjectionSet>(std::move(proj));
    std::unique_lock lock(projection_mutex);
    projections[method] = std::move(shared);
  }

  // ---- jobs --------------------------------------------------------------

  void update_job(const std::string& id, const std::function<void(JobStatus&)>& fn) {
    std::lock_guard lock(jobs_mutex);
    fn(jobs.at(id));
    jobs_cv.notify_all();
  }

  JobStatus submit(JobKind kind, nlohmann::json params) {
    std::lock_guard lock(jobs_mutex);
    if (active.contains(kind)) {
      throw Error(ErrorKind::IllegalTransition, "a " + std::string(to_string(kind)) + " job is already active");
    }
    JobStatus status;
    status.job_id = "job-" + std::to_string(next_job++);
    status.kind = kind;
    jobs[status.job_id] = status;
    active[kind] = status.job_id;
    workers.emplace_back([this, id = status.job_id, kind, params = std::move(params)] { run_job(id, kind, params); });
    return status;
  }

  void run_job(const std::string& id, JobKind kind, const nlohmann::json& params) {
    update_job(id, [](JobStatus& s) { s.state = JobState::running; });
    auto progress = [&](double f) { update_job(id, [f](JobStatus& s) { s.progress = f; }); };
    std::optional<std::string> result;
    std::optional<std::string> error;
    try {
      switch (kind) {
        case JobKind::embed: result = job_embed(params, progress); break;
        case JobKind::reduce: result = job_reduce(params); break;
        case JobKind::train: result = job_train(params); break;
        case JobKind::eval: result = job_eval(params); break;
      }
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::lock_guard lock(jobs_mutex);
    auto& s = jobs.at(id);
    s.state = error ? JobState::failed : JobState::done;
    if (!error) s.progress = 1.0;
    s.result_ref = result;
    s.error = error;
    active.erase(kind);
    jobs_cv.notify_all();
  }

  std::string job_embed(const nlohmann::json& params, const ProgressFn& progress) {
    FeatureConfig cfg;
    cfg.sample_rate = param_or<std::uint32_t>(params, "rate", cfg.sample_rate);
    const auto embeddings = embed_manifest(manifest_copy, cfg, progress);
    write_embeddings(ws.embeddings(), embeddings);
    return ws.embeddings().string();
  }

  std::string job_reduce(const nlohmann::json& params) {
    const auto method = parse_projection_method(param_or<std::string>(params, "method", "pca"));
    auto embeddings = read_embeddings(ws.embeddings());
    const double fraction = param_or<double>(params, "sample_fraction", 1.0);
    const auto seed = param_or<std::uint64_t>(params, "seed", 7);
    if (fraction < 1.0) embeddings = sample_subset<Embedding>(embeddings, fraction, seed);
    ProjectionSet proj;
    if (method == ProjectionMethod::pca) {
      proj = pca_projection(embeddings, param_or<std::size_t>(params, "k", 2));
    } else {
      UmapConfig cfg;
      cfg.n_neighbors = param_or<std::size_t>(params, "n_neighbors", cfg.n_neighbors);
      cfg.min_dist = param_or<double>(params, "min_dist", cfg.min_dist);
      cfg.n_epochs = param_or<std::size_t>(params, "epochs", cfg.n_epochs);
      cfg.seed = seed;
      proj = umap_fit(embeddings, cfg);
    }
    write_projection(ws.projection(method), proj);
    set_projection(std::move(proj));
    return ws.projection(method).string();
  }

  std::string job_train(const nlohmann::json& params) {
    ExportOptions opts;
    opts.classes = string_list(params, "classes");
    opts.min_count = param_or<std::size_t>(params, "min_count", opts.min_count);
    opts.background_class = param_or<std::string>(params, "background_class", opts.background_class);
    opts.background_ratio = param_or<double>(params, "background_ratio", opts.background_ratio);
    opts.seed = param_or<std::uint64_t>(params, "seed", opts.seed);
    const auto exported = export_training_set(*labels, opts);

    std::vector<std::string> classes = exported.kept;
    if (exported.counts.contains(opts.background_class)) classes.push_back(opts.background_class);
    SplitSpec split_spec;
    split_spec.seed = opts.seed;
    if (params.contains("split")) {
      const auto fr = params["split"].get<std::vector<double>>();
      if (fr.size() != 3) throw Error(ErrorKind::InvalidArgument, "split needs three fractions");
      split_spec.train_frac = fr[0];
      split_spec.val_frac = fr[1];
      split_spec.test_frac = fr[2];
    }
    TrainConfig cfg;
    cfg.seed = opts.seed;
    cfg.epochs = param_or<std::size_t>(params, "epochs", cfg.epochs);
    cfg.lr = param_or<double>(params, "lr", cfg.lr);
    cfg.batch = param_or<std::size_t>(params, "batch", cfg.batch);
    cfg.l2 = param_or<double>(params, "l2", cfg.l2);

    const auto embeddings = read_embeddings(ws.embeddings());
    auto run = train_run(embeddings, exported.items, classes, split_spec, cfg);
    run.model.train_meta["export"] = exported.report();
    save_model(ws.model(), run.model);
    write_predictions(ws.test_predictions(), run.model, run.test_predictions);
    std::vector<LabelRecord> truth;
    for (const auto& [ref, cls] : run.test_truth) {
      truth.push_back({ref.clip_id, ref.index, cls, LabelState::accepted, Provenance::import, "split", now_iso8601()});
    }
    write_label_records(ws.test_truth(), truth);
    return ws.model().string();
  }

  std::string job_eval(const nlohmann::json& params) {
    const auto preds = read_predictions(param_or<std::string>(params, "preds", ws.test_predictions().string()));
    const auto records = read_label_records(param_or<std::string>(params, "labels", ws.test_truth().string()));
    const std::string target = param_or<std::string>(params, "target", "airgun");
    const auto taus = params.contains("sweep") ? parse_tau_grid(params["sweep"].get<std::string>())
                                               : default_tau_grid();
    const auto curve = sweep(preds, truth_from_labels(records), target, taus);
    const auto argmax_metrics = prf(confusion(argmax_decisions(preds), truth_from_labels(records), target));
    report(curve, ws.report_dir(),
           {{"target", target},
            {"argmax", {{"precision", argmax_metrics.precision},
                        {"recall", argmax_metrics.recall},
                        {"f1", argmax_metrics.f1}}}});
    return ws.report_dir().string();
  }

  // ---- routes ------------------------------------------------------------

  void routes() {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        send_error(res, http_status(e.kind()), std::string(to_string(e.kind())), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
      }
    });

    server.Get("/api/projection", [this](const httplib::Request& req, httplib::Response& res) {
      get_projection(req, res);
    });
    server.Get("/api/projection/filter", [this](const httplib::Request& req, httplib::Response& res) {
      get_projection_filter(req, res);
    });
    server.Get("/api/snippets/:clip_id/:index/audio", [this](const httplib::Request& req, httplib::Response& res) {
      get_audio(req, res);
    });
    server.Get("/api/labels", [this](const httplib::Request& req, httplib::Response& res) { get_labels(req, res); });
    server.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) { post_label(req, res); });
    server.Get("/api/inventory", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, labels->class_inventory());
    });
    server.Post("/api/jobs", [this](const httplib::Request& req, httplib::Response& res) { post_job(req, res); });
    server.Get("/api/jobs/:id", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(jobs_mutex);
      const auto it = jobs.find(req.path_params.at("id"));
      if (it == jobs.end()) return send_error(res, 404, "UnknownJob", req.path_params.at("id"));
      send_json(res, 200, to_json(it->second));
    });

    const auto ui = config.static_dir.empty() ? ws.ui_dir() : config.static_dir;
    if (std::filesystem::is_directory(ui)) {
      server.set_mount_point("/", ui.string());
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("pamtriage service: UI bundle not installed; API under /api\n", "text/plain");
      });
    }
  }

  void get_projection(const httplib::Request& req, httplib::Response& res) {
    const auto method = parse_projection_method(req.has_param("method") ? req.get_param_value("method") : "pca");
    const auto proj = projection(method);
    if (!proj) return send_error(res, 404, "NoProjection", "no " + std::string(to_string(method)) + " projection");
    const auto keep = farthest_point_subset(*proj, config.projection_cap);
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i : keep) {
      const auto& p = proj->points[i];
      nlohmann::json row{{"clip_id", p.ref.clip_id}, {"index", p.ref.index}, {"x", p.x}, {"y", p.y}};
      const auto accepted = labels->accepted_classes(p.ref);
      if (!accepted.empty()) row["label"] = accepted.front();
      rows.push_back(std::move(row));
    }
    send_json(res, 200, rows);
  }

  void get_projection_filter(const httplib::Request& req, httplib::Response& res) {
    const auto method = parse_projection_method(req.has_param("method") ? req.get_param_value("method") : "pca");
    const auto proj = projection(method);
    if (!proj) return send_error(res, 404, "NoProjection", "no " + std::string(to_string(method)) + " projection");
    if (!req.has_param("threshold")) return send_error(res, 400, "InvalidArgument", "threshold is required");
    int component = 1;
    double threshold = 0.0;
    try {
      component = req.has_param("component") ? std::stoi(req.get_param_value("component")) : 1;
      threshold = std::stod(req.get_param_value("threshold"));
    } catch (const std::exception&) {
      return send_error(res, 400, "InvalidArgument", "component and threshold must be numeric");
    }
    const auto op = parse_compare_op(req.has_param("op") ? req.get_param_value("op") : "gt");
    const auto refs = filter_by_component(*proj, component, op, threshold);
    nlohmann::json out{{"count", refs.size()}, {"refs", nlohmann::json::array()}};
    for (const auto& r : refs) out["refs"].push_back({{"clip_id", r.clip_id}, {"index", r.index}});
    send_json(res, 200, out);
  }

  void get_audio(const httplib::Request& req, httplib::Response& res) {
    const auto index = parse_index(req.path_params.at("index"));
    if (!index) return send_error(res, 404, "UnknownSnippet", "bad snippet index");
    const SnippetRef ref{req.path_params.at("clip_id"), *index};
    const ManifestEntry* entry = manifest_copy.find(ref);
    if (entry == nullptr) return send_error(res, 404, "UnknownSnippet", to_string(ref));
    if (!std::filesystem::exists(entry->source_path)) {
      return send_error(res, 410, "SourceMissing", entry->source_path);
    }
    const auto samples = snippet_samples(*entry);
    const auto bytes = encode_wav_pcm16(samples, entry->rate);
    res.status = 200;
    res.set_content(std::string(bytes.begin(), bytes.end()), "audio/wav");
  }

  void get_labels(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json rows = nlohmann::json::array();
    const std::string clip = req.has_param("clip_id") ? req.get_param_value("clip_id") : "";
    for (const auto& rec : labels->snapshot()) {
      if (clip.empty() || rec.clip_id == clip) rows.push_back(rec);
    }
    send_json(res, 200, rows);
  }

  void post_label(const httplib::Request& req, httplib::Response& res) {
    LabelRecord rec;
    try {
      const auto body = nlohmann::json::parse(req.body);
      body.at("clip_id").get_to(rec.clip_id);
      body.at(body.contains("index") ? "index" : "snippet_index").get_to(rec.snippet_index);
      body.at("class").get_to(rec.class_name);
      rec.state = parse_label_state(body.at("state").get<std::string>());
      rec.provenance = parse_provenance(body.value("provenance", std::string("human")));
      rec.annotator = body.value("annotator", std::string("ui"));
    } catch (const nlohmann::json::exception& e) {
      return send_error(res, 400, "Malformed", e.what());
    } catch (const Error& e) {
      return send_error(res, 400, "Malformed", e.what());
    }
    const auto result = labels->upsert(std::move(rec));
    send_json(res, result.changed ? 201 : 200, result.record);
  }

  void post_job(const httplib::Request& req, httplib::Response& res) {
    JobKind kind{};
    nlohmann::json params;
    try {
      const auto body = nlohmann::json::parse(req.body);
      kind = parse_job_kind(body.at("kind").get<std::string>());
      params = body.value("params", nlohmann::json::object());
      if (!params.is_object()) return send_error(res, 400, "Malformed", "params must be an object");
    } catch (const nlohmann::json::exception& e) {
      return send_error(res, 400, "Malformed", e.what());
    } catch (const Error& e) {
      return send_error(res, 400, "Malformed", e.what());
    }
    try {
      send_json(res, 202, to_json(submit(kind, std::move(params))));
    } catch (const Error& e) {
      send_error(res, 409, "Conflict", e.what());
    }
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() {
  stop();
  wait_for_jobs();
  impl_->workers.clear();
}

int Service::start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorKind::IoError, "cannot bind " + host + ":" + std::to_string(port));
  impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void Service::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw Error(ErrorKind::IoError, "cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

void Service::wait_for_jobs() {
  std::unique_lock lock(impl_->jobs_mutex);
  impl_->jobs_cv.wait(lock, [this] { return impl_->active.empty(); });
}

LabelStore& Service::store() { return *impl_->labels; }
const Workspace& Service::workspace() const { return impl_->ws; }

}  // namespace pamtriage
