#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tsvat/error.hpp"
#include "tsvat/matrix_io.hpp"
#include "tsvat/service.hpp"
#include "tsvat/workbench.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
using tsvat::workbench::JobKind;
using tsvat::workbench::Workbench;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitJobFailed = 3;

struct Globals {
  std::uint64_t seed = 0;
  std::string store_dir = "tsvat-store";
  std::size_t workers = 2;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) tsvat::fail(tsvat::ErrorCode::IoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const std::string& path) {
  try {
    return json::parse(slurp(path));
  } catch (const json::parse_error& e) {
    tsvat::fail(tsvat::ErrorCode::ValidationError, path + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << bytes;
  if (!out) tsvat::fail(tsvat::ErrorCode::IoError, "cannot write " + path.string());
}

// Command-line flags override fields of the optional --params document.
template <class T>
void set_if(json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

int run_job(Workbench& wb, JobKind kind, const json& params, std::string* run_id = nullptr) {
  const auto id = wb.submit(kind, params);
  if (run_id) *run_id = id;
  std::cerr << "submitted " << id << "\n";
  const auto snap = wb.wait(id);
  std::cout << id << "\n";
  const auto manifest = wb.manifest(id);
  std::cerr << manifest["result"].dump(2) << "\n";
  if (snap.status != tsvat::store::RunStatus::Done) {
    std::cerr << "job failed: " << snap.error << "\n";
    return kExitJobFailed;
  }
  return kExitOk;
}

std::string coords_csv(const tsvat::Matrix& m) {
  std::ostringstream out;
  out.precision(17);
  out << "x,y\n";
  for (tsvat::Index i = 0; i < m.rows(); ++i) out << m(i, 0) << "," << m(i, 1) << "\n";
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-series window embedding workbench"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed for every job that does not set its own")
      ->capture_default_str();
  app.add_option("--store-dir", g.store_dir, "Run store directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Job queue workers")->capture_default_str();

  std::optional<std::string> params_file;
  const auto add_params = [&](CLI::App* cmd) {
    cmd->add_option("--params", params_file, "JSON document with job parameters");
  };

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset or ingest a CSV file");
  std::string gen_kind = "s1";
  std::optional<std::string> gen_id, gen_csv, gen_out;
  std::optional<tsvat::Index> gen_length;
  std::optional<double> gen_noise, gen_period;
  gen->add_option("--kind", gen_kind, "s1, s2, s3 or mtoy")->capture_default_str();
  gen->add_option("--length", gen_length, "Series length");
  gen->add_option("--noise", gen_noise, "Gaussian noise standard deviation");
  gen->add_option("--id", gen_id, "Dataset id");
  gen->add_option("--csv", gen_csv, "Ingest this delimited-text file instead of generating");
  gen->add_option("--sample-period", gen_period, "Sample period of the ingested series");
  gen->add_option("--out", gen_out, "Also write <id>.csv and <id>.annotations.json here");
  add_params(gen);

  // train
  auto* train = app.add_subcommand("train", "Fine-tune an encoder on a dataset");
  std::string dataset;
  std::optional<std::string> preset, init_run;
  std::optional<tsvat::Index> epochs, batch_size, n_windows, base_window;
  std::optional<double> mask_percent, training_percent, valid_percent, lr;
  std::vector<tsvat::Index> windows;
  train->add_option("--dataset", dataset, "Dataset id")->required();
  train->add_option("--preset", preset, "Encoder size preset: small, base, large");
  train->add_option("--init-run", init_run, "Start from the checkpoint of this finetune run");
  train->add_option("--epochs", epochs);
  train->add_option("--batch-size", batch_size);
  train->add_option("--mask-percent", mask_percent);
  train->add_option("--training-percent", training_percent);
  train->add_option("--valid-percent", valid_percent);
  train->add_option("--lr", lr);
  train->add_option("--windows", windows, "Explicit window lengths")->delimiter(',');
  train->add_option("--n-windows", n_windows, "Number of window lengths chosen from the spectrum");
  train->add_option("--base-window", base_window);
  add_params(train);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run the hyperparameter sweep grid");
  sweep->add_option("--dataset", dataset, "Dataset id")->required();
  sweep->add_option("--preset", preset, "Encoder size preset");
  sweep->add_option("--epochs", epochs);
  add_params(sweep);

  // embed
  auto* embed = app.add_subcommand("embed", "Embed every sliding window of a dataset");
  std::optional<std::string> model_run;
  std::optional<tsvat::Index> window_length, stride, bucket;
  embed->add_option("--dataset", dataset, "Dataset id")->required();
  embed->add_option("--model-run", model_run, "Finetune run supplying the checkpoint");
  embed->add_option("--preset", preset, "Untrained encoder preset when no model run is given");
  embed->add_option("--window", window_length, "Window length");
  embed->add_option("--stride", stride, "Window stride");
  embed->add_option("--bucket", bucket, "Downsampling bucket applied before windowing");
  add_params(embed);

  // project
  auto* project = app.add_subcommand("project", "Project an embedding run to 2D");
  std::string source;
  std::optional<std::string> method, coords_out;
  std::optional<double> perplexity;
  std::optional<tsvat::Index> iterations, pca_dims;
  project->add_option("--source", source, "Embed run id")->required();
  project->add_option("--method", method, "pca, tsne or pca_then_tsne");
  project->add_option("--perplexity", perplexity);
  project->add_option("--iterations", iterations);
  project->add_option("--pca-dims", pca_dims);
  project->add_option("--out", coords_out, "Write the coordinates as CSV");
  add_params(project);

  // report
  auto* report = app.add_subcommand("report", "Print a run's manifest or a sweep's analysis");
  std::string run_id;
  std::string report_format = "json";
  report->add_option("--run", run_id, "Run id")->required();
  report->add_option("--format", report_format, "json, table or manifest")
      ->check(CLI::IsMember({"json", "table", "manifest"}))
      ->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    tsvat::workbench::Options options;
    options.store_dir = g.store_dir;
    options.workers = g.workers;
    options.seed = g.seed;
    json params = params_file ? read_json_file(*params_file) : json::object();

    if (*gen) {
      Workbench wb(options);
      json spec = params;
      if (gen_csv) {
        spec["csv"] = slurp(*gen_csv);
        spec["id"] = gen_id.value_or(fs::path(*gen_csv).stem().string());
        set_if(spec, "sample_period", gen_period);
      } else {
        spec["kind"] = gen_kind;
        set_if(spec, "id", gen_id);
        if (!spec.contains("synth")) spec["synth"] = json::object();
        set_if(spec["synth"], "total_length", gen_length);
        set_if(spec["synth"], "noise_std", gen_noise);
      }
      const auto meta = wb.create_dataset(spec);
      const auto id = meta["id"].get<std::string>();
      std::cout << id << "\n";
      std::cerr << "length " << meta["length"] << ", channels " << meta["channels"] << "\n";
      if (gen_out) {
        const auto csv = wb.store().dataset_csv(id);
        write_file(fs::path(*gen_out) / (id + ".csv"), std::string(csv.begin(), csv.end()));
        json sidecar = meta.contains("ground_truth") ? meta["ground_truth"] : json::object();
        write_file(fs::path(*gen_out) / (id + ".annotations.json"), sidecar.dump(2) + "\n");
      }
      return kExitOk;
    }

    if (*train) {
      Workbench wb(options);
      params["dataset"] = dataset;
      if (preset) params["model"] = {{"preset", *preset}};
      set_if(params, "init_run", init_run);
      set_if(params, "n_windows", n_windows);
      set_if(params, "base_window", base_window);
      if (!params.contains("finetune")) params["finetune"] = json::object();
      auto& ft = params["finetune"];
      set_if(ft, "epochs", epochs);
      set_if(ft, "batch_size", batch_size);
      set_if(ft, "mask_percent", mask_percent);
      set_if(ft, "training_percent", training_percent);
      set_if(ft, "valid_percent", valid_percent);
      set_if(ft, "learning_rate", lr);
      if (!windows.empty()) ft["window_lengths"] = windows;
      return run_job(wb, JobKind::Finetune, params);
    }

    if (*sweep) {
      Workbench wb(options);
      params["dataset"] = dataset;
      if (preset) params["model"] = {{"preset", *preset}};
      if (!params.contains("grid")) params["grid"] = json::object();
      set_if(params["grid"], "epochs", epochs);
      return run_job(wb, JobKind::Sweep, params);
    }

    if (*embed) {
      Workbench wb(options);
      params["dataset"] = dataset;
      set_if(params, "model_run", model_run);
      if (preset) params["model"] = {{"preset", *preset}};
      if (window_length || stride) {
        if (!params.contains("window")) params["window"] = json::object();
        set_if(params["window"], "length", window_length);
        set_if(params["window"], "stride", stride);
      }
      set_if(params, "bucket", bucket);
      return run_job(wb, JobKind::Embed, params);
    }

    if (*project) {
      Workbench wb(options);
      params["source"] = source;
      set_if(params, "method", method);
      set_if(params, "perplexity", perplexity);
      set_if(params, "iterations", iterations);
      set_if(params, "pca_dims", pca_dims);
      std::string id;
      const int code = run_job(wb, JobKind::Project, params, &id);
      if (code == kExitOk && coords_out) {
        const auto coords = tsvat::binary::matrix_from_bytes(wb.artifact(id, "projection.bin"));
        write_file(*coords_out, coords_csv(coords));
      }
      return code;
    }

    if (*report) {
      Workbench wb(options);
      const auto manifest = wb.manifest(run_id);
      if (report_format == "manifest") {
        std::cout << manifest.dump(2) << "\n";
      } else if (report_format == "table") {
        std::cout << wb.sweep_table(run_id);
      } else {
        std::cout << wb.sweep_report(run_id).dump(2) << "\n";
      }
      return manifest["status"] == "failed" ? kExitJobFailed : kExitOk;
    }

    if (*serve) {
      Workbench wb(options);
      tsvat::service::Server server(wb);
      std::cerr << "serving " << g.store_dir << " on " << host << ":" << port << "\n";
      server.bind(host, port);
      server.listen();
      return kExitOk;
    }
  } catch (const tsvat::Error& e) {
    std::cerr << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
