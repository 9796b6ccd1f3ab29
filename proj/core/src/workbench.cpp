#include "tsvat/workbench.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tsvat/analysis.hpp"
#include "tsvat/codec.hpp"
#include "tsvat/encoder.hpp"
#include "tsvat/error.hpp"
#include "tsvat/finetune.hpp"
#include "tsvat/hash.hpp"
#include "tsvat/matrix_io.hpp"
#include "tsvat/projection.hpp"
#include "tsvat/synth.hpp"

namespace tsvat::workbench {
namespace {

using store::RunStatus;

constexpr Index kDefaultBaseWindow = 17;
constexpr Index kDefaultExtraWindows = 1;

Bytes text_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }
std::string bytes_text(const Bytes& b) { return std::string(b.begin(), b.end()); }

const json& require_key(const json& j, const char* key, const char* what) {
  require(j.is_object() && j.contains(key), ErrorCode::ValidationError,
          std::string(what) + " requires '" + key + "'");
  return j.at(key);
}

std::string string_field(const json& j, const char* key, const char* what) {
  const json& v = require_key(j, key, what);
  require(v.is_string(), ErrorCode::ValidationError, std::string(what) + "." + key + " must be a string");
  return v.get<std::string>();
}

void only_keys(const json& j, std::initializer_list<const char*> keys, const char* what) {
  require(j.is_object(), ErrorCode::ValidationError, std::string(what) + " params must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* allowed : keys) ok = ok || k == allowed;
    require(ok, ErrorCode::ValidationError, "unknown key '" + k + "' in " + what + " params");
  }
}

json with_default_seed(json j, std::uint64_t seed) {
  if (j.is_null()) j = json::object();
  require(j.is_object(), ErrorCode::ValidationError, "config blocks must be objects");
  if (!j.contains("seed")) j["seed"] = seed;
  return j;
}

encoder::EncoderModel load_model(const store::Store& s, const std::string& run_id) {
  const Bytes b = s.artifact(run_id, "model.ckpt");
  return encoder::checkpoint_from_bytes(b);
}

void check_window_fits(const encoder::EncoderConfig& mc, const ts::TimeSeries& series,
                       Index wlen) {
  require(wlen <= series.length(), ErrorCode::ValidationError,
          "window " + std::to_string(wlen) + " exceeds series length " +
              std::to_string(series.length()));
  require(wlen >= mc.patch_len, ErrorCode::ValidationError,
          "window " + std::to_string(wlen) + " is shorter than patch " + std::to_string(mc.patch_len));
  require(series.channels() * (wlen / mc.patch_len) <= mc.max_patches, ErrorCode::ValidationError,
          "window " + std::to_string(wlen) + " needs more tokens than max_patches allows");
}

std::string provenance_csv(const std::vector<ts::WindowSlice>& slices) {
  std::string out = "start,length\n";
  for (const auto& s : slices) out += std::to_string(s.start) + "," + std::to_string(s.length) + "\n";
  return out;
}

std::vector<ts::WindowSlice> parse_provenance(const Bytes& b, const std::string& source) {
  std::istringstream in(bytes_text(b));
  std::string line;
  std::getline(in, line);
  require(line == "start,length", ErrorCode::ParseError, "bad provenance header");
  std::vector<ts::WindowSlice> out;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    require(comma != std::string::npos, ErrorCode::ParseError, "bad provenance row");
    out.push_back({std::stoll(line.substr(0, comma)), std::stoll(line.substr(comma + 1)), source});
  }
  return out;
}

std::string curves_csv(const finetune::RunRecord& r) {
  std::string out = "epoch,train_loss,valid_loss\n";
  char buf[96];
  for (std::size_t e = 0; e < r.train_curve.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e + 1, r.train_curve[e], r.valid_curve[e]);
    out += buf;
  }
  return out;
}

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

JobKind parse_job_kind(std::string_view name) {
  if (name == "finetune") return JobKind::Finetune;
  if (name == "sweep") return JobKind::Sweep;
  if (name == "embed") return JobKind::Embed;
  if (name == "project") return JobKind::Project;
  fail(ErrorCode::ValidationError, "unknown job kind '" + std::string(name) + "'");
}

std::string_view to_string(JobKind kind) noexcept {
  switch (kind) {
    case JobKind::Finetune: return "finetune";
    case JobKind::Sweep: return "sweep";
    case JobKind::Embed: return "embed";
    case JobKind::Project: return "project";
  }
  return "finetune";
}

json JobSnapshot::to_json() const {
  json j{{"run_id", run_id},
         {"kind", kind},
         {"status", std::string(store::to_string(status))},
         {"progress", progress}};
  j["error"] = error.empty() ? json(nullptr) : json(error);
  return j;
}

Workbench::Workbench(Options options)
    : options_(std::move(options)),
      store_(options_.store_dir),
      queue_(std::make_unique<jobs::JobQueue>(options_.workers)) {}

Workbench::~Workbench() { queue_.reset(); }

// --- datasets ------------------------------------------------------------------

json Workbench::create_dataset(const json& spec) {
  require(spec.is_object(), ErrorCode::ValidationError, "dataset spec must be an object");
  ts::TimeSeries series;
  json meta;
  std::string id;
  if (spec.contains("csv")) {
    only_keys(spec, {"csv", "id", "sample_period"}, "dataset");
    id = string_field(spec, "id", "dataset upload");
    require(store::valid_identifier(id), ErrorCode::ValidationError, "invalid dataset id '" + id + "'");
    std::istringstream in(string_field(spec, "csv", "dataset upload"));
    try {
      series = ts::read_series_csv(in, id);
    } catch (const Error& e) {
      fail(ErrorCode::ValidationError, e.what());
    }
    meta["source"] = "upload";
    if (spec.contains("sample_period")) {
      require(spec["sample_period"].is_number() && spec["sample_period"].get<double>() > 0,
              ErrorCode::ValidationError, "sample_period must be a positive number");
      meta["sample_period"] = spec["sample_period"];
    }
  } else {
    only_keys(spec, {"kind", "synth", "id"}, "dataset");
    const auto kind_name = string_field(spec, "kind", "dataset");
    synth::Kind kind;
    synth::SynthConfig cfg;
    synth::Dataset data;
    try {
      kind = synth::parse_kind(kind_name);
      cfg = codec::synth_config_from_json(
          with_default_seed(spec.value("synth", json::object()), options_.seed));
      data = synth::generate(kind, cfg);
    } catch (const Error& e) {
      fail(ErrorCode::ValidationError, e.what());
    }
    const json cfg_json = codec::to_json(cfg);
    id = spec.contains("id") ? string_field(spec, "id", "dataset")
                             : std::string(synth::to_string(kind)) + "-" +
                                   sha256_hex(cfg_json.dump()).substr(0, 12);
    require(store::valid_identifier(id), ErrorCode::ValidationError, "invalid dataset id '" + id + "'");
    series = std::move(data.series);
    meta["source"] = "synth";
    meta["kind"] = std::string(synth::to_string(kind));
    meta["synth"] = cfg_json;
    meta["ground_truth"] = codec::to_json(data.truth);
  }
  meta["length"] = series.length();
  meta["channels"] = series.channels();
  meta["channel_names"] = series.channel_names;
  std::ostringstream csv;
  ts::write_series_csv(csv, series);
  store_.put_dataset(id, text_bytes(csv.str()), meta);
  return store_.dataset_meta(id);
}

json Workbench::list_datasets() const {
  json out = json::array();
  for (auto meta : store_.list_datasets()) {
    meta.erase("ground_truth");
    meta.erase("synth");
    out.push_back(std::move(meta));
  }
  return out;
}

ts::TimeSeries Workbench::load_dataset(const std::string& id) const {
  const Bytes b = store_.dataset_csv(id);
  std::istringstream in(bytes_text(b));
  auto series = ts::read_series_csv(in, id);
  const json meta = store_.dataset_meta(id);
  if (meta.contains("sample_period")) series.sample_period = meta["sample_period"].get<double>();
  return series;
}

json Workbench::dataset_values(const std::string& id, std::optional<Index> from,
                               std::optional<Index> to, Index bucket) const {
  const auto series = load_dataset(id);
  const Index begin = from.value_or(0);
  const Index end = to.value_or(series.length());
  require(begin >= 0 && begin < end && end <= series.length(), ErrorCode::IndexOutOfRange,
          "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside [0, " +
              std::to_string(series.length()) + ")");
  require(bucket >= 1, ErrorCode::ValidationError, "bucket must be positive");
  auto slice = ts::TimeSeries::from_matrix(id, ts::window_values(series, begin, end - begin),
                                           series.channel_names);
  if (bucket > 1) slice = ts::downsample_mean(slice, bucket);
  return {{"id", id},
          {"from", begin},
          {"to", end},
          {"bucket", bucket},
          {"channels", series.channel_names},
          {"values", matrix_rows(slice.values)}};
}

// --- jobs --------------------------------------------------------------------------

json Workbench::normalize(JobKind kind, const json& params) const {
  const std::uint64_t seed = options_.seed;
  json out;
  switch (kind) {
    case JobKind::Finetune: {
      only_keys(params, {"dataset", "model", "init_run", "finetune", "n_windows", "base_window"},
                "finetune");
      const auto dataset = string_field(params, "dataset", "finetune");
      const auto series = load_dataset(dataset);
      encoder::EncoderConfig mc;
      json init_run = nullptr;
      if (params.contains("init_run") && !params["init_run"].is_null()) {
        const auto id = string_field(params, "init_run", "finetune");
        done_run(id, "finetune");
        mc = load_model(store_, id).config;
        init_run = id;
      } else {
        mc = codec::encoder_config_from_json(with_default_seed(params.value("model", json::object()), seed));
      }
      mc.validate();
      json ft = with_default_seed(params.value("finetune", json::object()), seed);
      auto fc = codec::finetune_config_from_json(ft);
      if (!ft.contains("window_lengths")) {
        const Index extra = params.value("n_windows", 1 + kDefaultExtraWindows);
        const Index base = params.value("base_window", kDefaultBaseWindow);
        // Extra lengths must fit the training and validation shares of the series.
        const auto share = [&](double p) {
          return static_cast<Index>(std::floor(p * static_cast<double>(series.length()) + 1e-9));
        };
        const Index max_size = std::min({series.length() / 2, share(fc.training_percent),
                                         share(fc.valid_percent)});
        const Index min_size = std::max<Index>(2, 2 * mc.patch_len);
        fc.window_lengths = max_size >= min_size
                                ? finetune::select_window_lengths(series, extra, base, min_size, max_size)
                                : std::vector<Index>{base};
      }
      fc.validate(mc.patch_len);
      for (const Index w : fc.window_lengths) check_window_fits(mc, series, w);
      finetune::BatchSchedule::build(series, fc, mc.patch_len);
      out = {{"dataset", dataset},
             {"model", codec::to_json(mc)},
             {"init_run", init_run},
             {"finetune", codec::to_json(fc)}};
      break;
    }
    case JobKind::Sweep: {
      only_keys(params, {"dataset", "grid", "model"}, "sweep");
      const auto dataset = string_field(params, "dataset", "sweep");
      const auto series = load_dataset(dataset);
      const auto mc =
          codec::encoder_config_from_json(with_default_seed(params.value("model", json::object()), seed));
      mc.validate();
      const auto grid =
          codec::sweep_grid_from_json(with_default_seed(params.value("grid", json::object()), seed));
      grid.validate();
      check_window_fits(mc, series, grid.base_window);
      out = {{"dataset", dataset}, {"model", codec::to_json(mc)}, {"grid", codec::to_json(grid)}};
      break;
    }
    case JobKind::Embed: {
      only_keys(params, {"dataset", "model_run", "model", "window", "bucket"}, "embed");
      const auto dataset = string_field(params, "dataset", "embed");
      const auto series = load_dataset(dataset);
      encoder::EncoderConfig mc;
      json model_run = nullptr;
      if (params.contains("model_run") && !params["model_run"].is_null()) {
        const auto id = string_field(params, "model_run", "embed");
        done_run(id, "finetune");
        mc = load_model(store_, id).config;
        model_run = id;
      } else {
        mc = codec::encoder_config_from_json(with_default_seed(params.value("model", json::object()), seed));
      }
      mc.validate();
      const auto window = codec::window_spec_from_json(params.value("window", json::object()));
      const Index bucket = params.value("bucket", Index{1});
      require(bucket >= 1, ErrorCode::ValidationError, "bucket must be positive");
      require(window.stride >= 1, ErrorCode::ValidationError, "stride must be positive");
      const Index embedded_length = (series.length() + bucket - 1) / bucket;
      check_window_fits(mc, series, window.length);
      require(ts::window_count(embedded_length, window) >= 2, ErrorCode::ValidationError,
              "embedding needs at least two windows");
      out = {{"dataset", dataset},
             {"model_run", model_run},
             {"model", codec::to_json(mc)},
             {"window", codec::to_json(window)},
             {"bucket", bucket}};
      break;
    }
    case JobKind::Project: {
      only_keys(params, {"source", "method", "perplexity", "iterations", "pca_dims", "seed"}, "project");
      const auto source = string_field(params, "source", "project");
      const auto m = done_run(source, "embed");
      json pj = with_default_seed(params, seed);
      pj.erase("source");
      const auto pp = codec::projection_params_from_json(pj);
      pp.validate();
      const Index n = m.result.at("rows").get<Index>();
      if (pp.method != projection::Method::Pca) pp.tsne_config().validate(n);
      out = codec::to_json(pp);
      out["source"] = source;
      break;
    }
  }
  return out;
}

std::string Workbench::submit(JobKind kind, const json& params) {
  json normalized;
  try {
    normalized = normalize(kind, params.is_null() ? json::object() : params);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ValidationError) throw;
    fail(ErrorCode::ValidationError, e.what());
  }
  const std::string id = store_.create_run(std::string(to_string(kind)), normalized);
  queue_->enqueue(id, [this, kind, id, normalized](const jobs::ProgressFn& progress) {
    try {
      store_.mark_running(id);
      execute(kind, id, normalized, progress);
    } catch (const finetune::DivergedError& e) {
      store_.mark_failed(id, e.what(), {{"record", codec::to_json(e.record())}});
    } catch (const std::exception& e) {
      try {
        store_.mark_failed(id, e.what());
      } catch (...) {
      }
    }
  });
  return id;
}

std::string Workbench::submit(const json& request) {
  require(request.is_object(), ErrorCode::ValidationError, "job request must be an object");
  only_keys(request, {"kind", "params"}, "job request");
  return submit(parse_job_kind(string_field(request, "kind", "job request")),
                request.value("params", json::object()));
}

void Workbench::execute(JobKind kind, const std::string& run_id, const json& params,
                        const jobs::ProgressFn& progress) {
  switch (kind) {
    case JobKind::Finetune: {
      const auto series = load_dataset(params["dataset"].get<std::string>());
      const auto model = params["init_run"].is_null()
                             ? encoder::init_model(codec::encoder_config_from_json(params["model"]))
                             : load_model(store_, params["init_run"].get<std::string>());
      const auto fc = codec::finetune_config_from_json(params["finetune"]);
      auto result = finetune::finetune(model, series, fc, progress);
      store_.complete(run_id,
                      {{"model.ckpt", encoder::checkpoint_bytes(result.best_model)},
                       {"curves.csv", text_bytes(curves_csv(result.record))}},
                      {{"record", codec::to_json(result.record)},
                       {"parameter_count", encoder::parameter_count(model.config)}});
      break;
    }
    case JobKind::Sweep: {
      const auto series = load_dataset(params["dataset"].get<std::string>());
      const auto mc = codec::encoder_config_from_json(params["model"]);
      const auto grid = codec::sweep_grid_from_json(params["grid"]);
      const auto result = analysis::run_sweep(series, grid, mc, [&](std::size_t done, std::size_t total) {
        progress(static_cast<double>(done) / static_cast<double>(total));
      });
      const auto report = analysis::build_report(result);
      std::ostringstream table;
      analysis::write_sweep_table(table, result);
      json summary = codec::to_json(report);
      store_.complete(run_id,
                      {{"sweep.csv", text_bytes(table.str())},
                       {"sweep.json", text_bytes(codec::to_json(result).dump(2) + "\n")},
                       {"report.json", text_bytes(summary.dump(2) + "\n")}},
                      {{"cells", result.rows.size()},
                       {"failed", report.failed},
                       {"epoch_budget", summary["epoch_budget"]}});
      break;
    }
    case JobKind::Embed: {
      const auto dataset = params["dataset"].get<std::string>();
      const auto series = load_dataset(dataset);
      encoder::EncoderModel model;
      std::string model_ref;
      if (params["model_run"].is_null()) {
        model = encoder::init_model(codec::encoder_config_from_json(params["model"]));
        model_ref = "init:" + sha256_hex(params["model"].dump()).substr(0, 16);
      } else {
        const auto src = params["model_run"].get<std::string>();
        model = load_model(store_, src);
        model_ref = src + "/model.ckpt";
      }
      const auto window = codec::window_spec_from_json(params["window"]);
      const Index bucket = params["bucket"].get<Index>();
      auto e = projection::embed_series(model, series, window, bucket, model_ref);
      progress(0.9);
      store_.complete(run_id,
                      {{"embeddings.bin", binary::matrix_bytes(e.rows)},
                       {"provenance.csv", text_bytes(provenance_csv(e.provenance))}},
                      {{"rows", e.rows.rows()},
                       {"dims", e.rows.cols()},
                       {"model_ref", model_ref},
                       {"bucket", bucket}});
      break;
    }
    case JobKind::Project: {
      const auto source = params["source"].get<std::string>();
      const auto src = store_.manifest(source);
      projection::EmbeddingMatrix e;
      e.rows = binary::matrix_from_bytes(store_.artifact(source, "embeddings.bin"));
      e.provenance = parse_provenance(store_.artifact(source, "provenance.csv"),
                                      src.params["dataset"].get<std::string>());
      e.model_ref = src.result.at("model_ref").get<std::string>();
      json pj = params;
      pj.erase("source");
      const auto pp = codec::projection_params_from_json(pj);
      const auto p = projection::project_pipeline(e, pp);
      json sidecar = codec::to_json(pp);
      sidecar["source_run"] = source;
      sidecar["source_sha256"] = src.artifacts.at("embeddings.bin").sha256;
      sidecar["rows"] = p.coords.rows();
      sidecar["explained_variance"] =
          p.explained_variance ? json(std::vector<double>(p.explained_variance->begin(),
                                                          p.explained_variance->end()))
                               : json(nullptr);
      store_.complete(run_id,
                      {{"projection.bin", binary::matrix_bytes(p.coords)},
                       {"projection.json", text_bytes(sidecar.dump(2) + "\n")}},
                      {{"rows", p.coords.rows()}, {"method", std::string(projection::to_string(pp.method))}});
      break;
    }
  }
}

JobSnapshot Workbench::poll(const std::string& run_id) const {
  const auto m = store_.manifest(run_id);
  JobSnapshot s;
  s.run_id = run_id;
  s.kind = m.kind;
  s.status = m.status;
  s.error = m.error;
  if (m.status == RunStatus::Done || m.status == RunStatus::Failed) {
    s.progress = m.status == RunStatus::Done ? 1.0 : queue_->progress(run_id);
  } else {
    s.progress = std::min(queue_->progress(run_id), 0.999);
  }
  return s;
}

JobSnapshot Workbench::wait(const std::string& run_id) const {
  require(store_.has_run(run_id), ErrorCode::NotFound, "no run '" + run_id + "'");
  queue_->wait(run_id);
  return poll(run_id);
}

// --- runs --------------------------------------------------------------------------

store::Manifest Workbench::done_run(const std::string& run_id, std::string_view kind) const {
  const auto m = store_.manifest(run_id);
  require(m.kind == kind, ErrorCode::ValidationError,
          "run " + run_id + " is a " + m.kind + " run, expected " + std::string(kind));
  require(m.status == RunStatus::Done, ErrorCode::ValidationError,
          "run " + run_id + " is " + std::string(store::to_string(m.status)));
  return m;
}

json Workbench::manifest(const std::string& run_id) const { return store_.manifest(run_id).to_json(); }

Bytes Workbench::artifact(const std::string& run_id, const std::string& name) const {
  return store_.artifact(run_id, name);
}

Bytes Workbench::embeddings(const std::string& run_id) const {
  return store_.artifact(run_id, "embeddings.bin");
}

Bytes Workbench::projection(const std::string& run_id, const ProjectionQuery& query) const {
  const auto m = store_.manifest(run_id);
  if (m.kind == "project") return store_.artifact(run_id, "projection.bin");
  require(m.kind == "embed", ErrorCode::NotFound, "run " + run_id + " has no projections");
  const auto matches = [&](const store::Manifest& p) {
    if (p.kind != "project" || p.status != RunStatus::Done) return false;
    if (p.params.value("source", "") != run_id) return false;
    if (query.method && p.params["method"].get<std::string>() != *query.method) return false;
    if (query.perplexity && p.params["perplexity"].get<double>() != *query.perplexity) return false;
    if (query.seed && p.params["seed"].get<std::uint64_t>() != *query.seed) return false;
    return true;
  };
  const auto runs = store_.list_runs();
  for (auto it = runs.rbegin(); it != runs.rend(); ++it) {
    if (matches(*it)) return store_.artifact(it->run_id, "projection.bin");
  }
  fail(ErrorCode::NotFound, "no finished projection of " + run_id +
                                " matches the query; submit a project job first");
}

json Workbench::selection(const std::string& run_id, const std::vector<Index>& indices) const {
  auto m = store_.manifest(run_id);
  std::string embed_run = run_id;
  if (m.kind == "project") {
    embed_run = m.params["source"].get<std::string>();
    m = store_.manifest(embed_run);
  }
  require(m.kind == "embed", ErrorCode::NotFound, "run " + run_id + " has no embedding provenance");
  const auto dataset = m.params["dataset"].get<std::string>();
  const auto slices = parse_provenance(store_.artifact(embed_run, "provenance.csv"), dataset);
  json windows = json::array();
  if (!indices.empty()) {
    auto series = load_dataset(dataset);
    const Index bucket = m.params["bucket"].get<Index>();
    if (bucket > 1) series = ts::downsample_mean(series, bucket);
    for (const Index i : indices) {
      require(i >= 0 && i < static_cast<Index>(slices.size()), ErrorCode::IndexOutOfRange,
              "point " + std::to_string(i) + " outside [0, " + std::to_string(slices.size()) + ")");
      json w = codec::to_json(slices[i]);
      w["index"] = i;
      w["values"] = matrix_rows(ts::window_values(series, slices[i]));
      windows.push_back(std::move(w));
    }
  }
  return {{"run_id", embed_run}, {"bucket", m.params["bucket"]}, {"windows", windows}};
}

std::string Workbench::sweep_table(const std::string& run_id) const {
  done_run(run_id, "sweep");
  return bytes_text(store_.artifact(run_id, "sweep.csv"));
}

json Workbench::sweep_report(const std::string& run_id) const {
  done_run(run_id, "sweep");
  const Bytes b = store_.artifact(run_id, "report.json");
  return json::parse(b.begin(), b.end());
}

}  // namespace tsvat::workbench
