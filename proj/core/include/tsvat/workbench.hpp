#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsvat/jobs.hpp"
#include "tsvat/series.hpp"
#include "tsvat/store.hpp"

namespace tsvat::workbench {

using json = nlohmann::json;
using store::Bytes;

enum class JobKind { Finetune, Sweep, Embed, Project };

JobKind parse_job_kind(std::string_view name);  // ValidationError
std::string_view to_string(JobKind kind) noexcept;

struct Options {
  std::filesystem::path store_dir = "tsvat-store";
  std::size_t workers = 2;
  std::uint64_t seed = 0;  // default for every params block that omits a seed
};

struct JobSnapshot {
  std::string run_id;
  std::string kind;
  store::RunStatus status = store::RunStatus::Pending;
  double progress = 0.0;
  std::string error;

  json to_json() const;
};

struct ProjectionQuery {
  std::optional<std::string> method;
  std::optional<double> perplexity;
  std::optional<std::uint64_t> seed;
};

/// The operations shared by the CLI and the HTTP service. All computation
/// runs on the job queue; every other call only reads the store.
class Workbench {
 public:
  explicit Workbench(Options options);
  ~Workbench();

  const Options& options() const noexcept { return options_; }
  store::Store& store() noexcept { return store_; }

  // datasets
  /// {"kind": "s1" | "s2" | "s3" | "mtoy", "synth": {...}, "id"?} generates;
  /// {"csv": "...", "id": ..., "sample_period"?} ingests delimited text.
  json create_dataset(const json& spec);
  json list_datasets() const;
  ts::TimeSeries load_dataset(const std::string& id) const;
  json dataset_values(const std::string& id, std::optional<Index> from, std::optional<Index> to,
                      Index bucket) const;

  // jobs
  /// Resolves defaults, validates against the target config types and
  /// enqueues. Throws ValidationError before anything is written.
  std::string submit(JobKind kind, const json& params);
  std::string submit(const json& request);  // {"kind": ..., "params": {...}}
  JobSnapshot poll(const std::string& run_id) const;
  JobSnapshot wait(const std::string& run_id) const;

  // runs
  json manifest(const std::string& run_id) const;
  Bytes artifact(const std::string& run_id, const std::string& name) const;
  Bytes embeddings(const std::string& run_id) const;
  /// Coordinates of a project run, or of the latest finished project run
  /// over the given embed run whose parameters match the query.
  Bytes projection(const std::string& run_id, const ProjectionQuery& query) const;
  json selection(const std::string& run_id, const std::vector<Index>& indices) const;
  std::string sweep_table(const std::string& run_id) const;
  json sweep_report(const std::string& run_id) const;

 private:
  json normalize(JobKind kind, const json& params) const;
  void execute(JobKind kind, const std::string& run_id, const json& params,
               const jobs::ProgressFn& progress);
  store::Manifest done_run(const std::string& run_id, std::string_view kind) const;

  Options options_;
  store::Store store_;
  std::unique_ptr<jobs::JobQueue> queue_;
};

}  // namespace tsvat::workbench
