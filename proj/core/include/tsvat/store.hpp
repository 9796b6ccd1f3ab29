#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tsvat::store {

using json = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

enum class RunStatus { Pending, Running, Done, Failed };

std::string_view to_string(RunStatus s) noexcept;
RunStatus parse_status(std::string_view s);

struct ArtifactInfo {
  std::string sha256;
  std::uint64_t bytes = 0;
};

struct Manifest {
  std::string run_id;
  std::string kind;
  RunStatus status = RunStatus::Pending;
  std::uint64_t sequence = 0;
  json params = json::object();
  json result = nullptr;  // kind-specific summary, present once done
  std::string error;
  std::map<std::string, ArtifactInfo> artifacts;

  json to_json() const;
  static Manifest from_json(const json& j);
};

/// On-disk run and dataset store.
///
///   <root>/runs/<run_id>/manifest.json   plus one file per artifact
///   <root>/datasets/<id>/series.csv      plus meta.json
///
/// Files are written to a temporary name and renamed into place, and a
/// run's artifacts only become reachable once its manifest says done.
class Store {
 public:
  /// Opens or creates the store. Runs left pending or running by a previous
  /// process are marked failed.
  explicit Store(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::size_t recovered_runs() const noexcept { return recovered_; }

  /// Content-addressed id: hash of kind, params, code version and a store-wide
  /// submission counter, so identical submissions still get distinct ids.
  std::string create_run(const std::string& kind, const json& params);

  /// Transitions must be monotone: pending -> running -> done | failed.
  void mark_running(const std::string& run_id);
  void mark_failed(const std::string& run_id, const std::string& error,
                   const json& result = nullptr);
  /// Writes every artifact, then flips the manifest to done.
  void complete(const std::string& run_id, const std::map<std::string, Bytes>& artifacts,
                const json& result);

  bool has_run(const std::string& run_id) const;
  Manifest manifest(const std::string& run_id) const;  // NotFound
  std::vector<Manifest> list_runs() const;             // by sequence

  /// Verified read; NotFound if absent or the run is not done, ChecksumMismatch on corruption.
  Bytes artifact(const std::string& run_id, const std::string& name) const;
  std::filesystem::path artifact_path(const std::string& run_id, const std::string& name) const;

  void put_dataset(const std::string& id, const Bytes& csv, const json& meta);
  bool has_dataset(const std::string& id) const;
  json dataset_meta(const std::string& id) const;   // NotFound
  Bytes dataset_csv(const std::string& id) const;   // NotFound, ChecksumMismatch
  std::vector<json> list_datasets() const;          // by id

 private:
  std::filesystem::path run_dir(const std::string& run_id) const;
  std::filesystem::path dataset_dir(const std::string& id) const;
  void write_manifest(const Manifest& m) const;
  void transition(const std::string& run_id, RunStatus to,
                  const std::function<void(Manifest&)>& edit);

  std::filesystem::path root_;
  std::size_t recovered_ = 0;
  mutable std::mutex mutex_;
};

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
void write_atomic(const std::filesystem::path& path, const Bytes& bytes);
void write_atomic(const std::filesystem::path& path, std::string_view text);
Bytes read_file(const std::filesystem::path& path);

/// Identifiers become path components, so they are restricted to [A-Za-z0-9._-]
/// and may not start with a dot.
bool valid_identifier(std::string_view id) noexcept;

inline constexpr std::string_view kCodeVersion = "tsvat-0.1.0";

}  // namespace tsvat::store
