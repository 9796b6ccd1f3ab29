#include "tsvat/store.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "tsvat/error.hpp"
#include "tsvat/hash.hpp"

namespace tsvat::store {
namespace fs = std::filesystem;
namespace {

std::string sha_of(const Bytes& b) { return sha256_hex(std::span<const std::uint8_t>(b)); }

Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

json read_json(const fs::path& path) {
  const Bytes b = read_file(path);
  try {
    return json::parse(b.begin(), b.end());
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace

std::string_view to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::Pending: return "pending";
    case RunStatus::Running: return "running";
    case RunStatus::Done: return "done";
    case RunStatus::Failed: return "failed";
  }
  return "failed";
}

RunStatus parse_status(std::string_view s) {
  if (s == "pending") return RunStatus::Pending;
  if (s == "running") return RunStatus::Running;
  if (s == "done") return RunStatus::Done;
  if (s == "failed") return RunStatus::Failed;
  fail(ErrorCode::ParseError, "unknown run status '" + std::string(s) + "'");
}

json Manifest::to_json() const {
  json arts = json::object();
  for (const auto& [name, info] : artifacts) {
    arts[name] = {{"sha256", info.sha256}, {"bytes", info.bytes}};
  }
  json j{{"run_id", run_id},   {"kind", kind},     {"status", std::string(store::to_string(status))},
         {"sequence", sequence}, {"params", params}, {"result", result},
         {"artifacts", arts},  {"code_version", std::string(kCodeVersion)}};
  j["error"] = error.empty() ? json(nullptr) : json(error);
  return j;
}

Manifest Manifest::from_json(const json& j) {
  Manifest m;
  try {
    m.run_id = j.at("run_id").get<std::string>();
    m.kind = j.at("kind").get<std::string>();
    m.status = parse_status(j.at("status").get<std::string>());
    m.sequence = j.at("sequence").get<std::uint64_t>();
    m.params = j.at("params");
    m.result = j.at("result");
    if (!j.at("error").is_null()) m.error = j.at("error").get<std::string>();
    for (const auto& [name, info] : j.at("artifacts").items()) {
      m.artifacts[name] = {info.at("sha256").get<std::string>(), info.at("bytes").get<std::uint64_t>()};
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

bool valid_identifier(std::string_view id) noexcept {
  if (id.empty() || id.size() > 128 || id.front() == '.') return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '.' || c == '_' || c == '-';
  });
}

void write_atomic(const fs::path& path, const Bytes& bytes) {
  static std::atomic<std::uint64_t> counter{0};
  std::ostringstream suffix;
  suffix << ".tmp-" << std::this_thread::get_id() << '-' << counter++;
  const fs::path tmp = path.parent_path() / ("." + path.filename().string() + suffix.str());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.is_open(), ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    require(out.good(), ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    fail(ErrorCode::IoError, "rename to " + path.string() + " failed: " + ec.message());
  }
}

void write_atomic(const fs::path& path, std::string_view text) { write_atomic(path, to_bytes(text)); }

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.is_open(), ErrorCode::NotFound, "no such file " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Store::Store(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "runs");
  fs::create_directories(root_ / "datasets");
  for (const auto& entry : fs::directory_iterator(root_ / "runs")) {
    if (!entry.is_directory()) continue;
    const fs::path mpath = entry.path() / "manifest.json";
    if (!fs::exists(mpath)) {
      fs::remove_all(entry.path());
      continue;
    }
    Manifest m = Manifest::from_json(read_json(mpath));
    if (m.status == RunStatus::Pending || m.status == RunStatus::Running) {
      m.status = RunStatus::Failed;
      m.error = "abandoned: the process exited before the job finished";
      m.artifacts.clear();
      write_manifest(m);
      ++recovered_;
    }
    for (const auto& f : fs::directory_iterator(entry.path())) {
      if (f.path().filename().string().starts_with(".")) fs::remove(f.path());
    }
  }
}

fs::path Store::run_dir(const std::string& run_id) const {
  require(valid_identifier(run_id), ErrorCode::NotFound, "no run '" + run_id + "'");
  return root_ / "runs" / run_id;
}

fs::path Store::dataset_dir(const std::string& id) const {
  require(valid_identifier(id), ErrorCode::NotFound, "no dataset '" + id + "'");
  return root_ / "datasets" / id;
}

void Store::write_manifest(const Manifest& m) const {
  write_atomic(root_ / "runs" / m.run_id / "manifest.json", m.to_json().dump(2) + "\n");
}

std::string Store::create_run(const std::string& kind, const json& params) {
  std::lock_guard lock(mutex_);
  const fs::path seq_path = root_ / "sequence";
  std::uint64_t seq = 0;
  if (fs::exists(seq_path)) {
    const Bytes b = read_file(seq_path);
    seq = std::stoull(std::string(b.begin(), b.end()));
  }
  ++seq;
  write_atomic(seq_path, std::to_string(seq));
  const std::string material =
      kind + "\n" + params.dump() + "\n" + std::string(kCodeVersion) + "\n" + std::to_string(seq);
  Manifest m;
  m.run_id = kind + "-" + sha256_hex(material).substr(0, 16);
  m.kind = kind;
  m.sequence = seq;
  m.params = params;
  fs::create_directories(root_ / "runs" / m.run_id);
  write_manifest(m);
  return m.run_id;
}

void Store::transition(const std::string& run_id, RunStatus to,
                       const std::function<void(Manifest&)>& edit) {
  std::lock_guard lock(mutex_);
  Manifest m = Manifest::from_json(read_json(run_dir(run_id) / "manifest.json"));
  const bool ok = (m.status == RunStatus::Pending && to != RunStatus::Done) ||
                  (m.status == RunStatus::Running && (to == RunStatus::Done || to == RunStatus::Failed));
  require(ok, ErrorCode::ValidationError,
          "run " + run_id + " cannot go from " + std::string(to_string(m.status)) + " to " +
              std::string(to_string(to)));
  m.status = to;
  if (edit) edit(m);
  write_manifest(m);
}

void Store::mark_running(const std::string& run_id) { transition(run_id, RunStatus::Running, {}); }

void Store::mark_failed(const std::string& run_id, const std::string& error, const json& result) {
  transition(run_id, RunStatus::Failed, [&](Manifest& m) {
    m.error = error;
    m.result = result;
    m.artifacts.clear();
  });
}

void Store::complete(const std::string& run_id, const std::map<std::string, Bytes>& artifacts,
                     const json& result) {
  const fs::path dir = run_dir(run_id);
  std::map<std::string, ArtifactInfo> infos;
  for (const auto& [name, bytes] : artifacts) {
    require(valid_identifier(name) && name != "manifest.json", ErrorCode::ValidationError,
            "invalid artifact name '" + name + "'");
    write_atomic(dir / name, bytes);
    infos[name] = {sha_of(bytes), bytes.size()};
  }
  transition(run_id, RunStatus::Done, [&](Manifest& m) {
    m.artifacts = infos;
    m.result = result;
  });
}

bool Store::has_run(const std::string& run_id) const {
  return valid_identifier(run_id) && fs::exists(root_ / "runs" / run_id / "manifest.json");
}

Manifest Store::manifest(const std::string& run_id) const {
  require(has_run(run_id), ErrorCode::NotFound, "no run '" + run_id + "'");
  return Manifest::from_json(read_json(run_dir(run_id) / "manifest.json"));
}

std::vector<Manifest> Store::list_runs() const {
  std::vector<Manifest> out;
  for (const auto& entry : fs::directory_iterator(root_ / "runs")) {
    const auto id = entry.path().filename().string();
    if (entry.is_directory() && has_run(id)) out.push_back(manifest(id));
  }
  std::sort(out.begin(), out.end(), [](const Manifest& a, const Manifest& b) {
    return a.sequence < b.sequence;
  });
  return out;
}

fs::path Store::artifact_path(const std::string& run_id, const std::string& name) const {
  return run_dir(run_id) / name;
}

Bytes Store::artifact(const std::string& run_id, const std::string& name) const {
  const Manifest m = manifest(run_id);
  require(m.status == RunStatus::Done, ErrorCode::NotFound,
          "run " + run_id + " is " + std::string(to_string(m.status)) + ", artifacts unavailable");
  const auto it = m.artifacts.find(name);
  require(it != m.artifacts.end(), ErrorCode::NotFound,
          "run " + run_id + " has no artifact '" + name + "'");
  const Bytes b = read_file(artifact_path(run_id, name));
  require(b.size() == it->second.bytes && sha_of(b) == it->second.sha256,
          ErrorCode::ChecksumMismatch, "artifact " + run_id + "/" + name + " fails its checksum");
  return b;
}

void Store::put_dataset(const std::string& id, const Bytes& csv, const json& meta) {
  require(valid_identifier(id), ErrorCode::ValidationError, "invalid dataset id '" + id + "'");
  std::lock_guard lock(mutex_);
  const fs::path dir = root_ / "datasets" / id;
  fs::create_directories(dir);
  json m = meta;
  m["id"] = id;
  m["sha256"] = sha_of(csv);
  m["bytes"] = csv.size();
  write_atomic(dir / "series.csv", csv);
  write_atomic(dir / "meta.json", m.dump(2) + "\n");
}

bool Store::has_dataset(const std::string& id) const {
  return valid_identifier(id) && fs::exists(root_ / "datasets" / id / "meta.json");
}

json Store::dataset_meta(const std::string& id) const {
  require(has_dataset(id), ErrorCode::NotFound, "no dataset '" + id + "'");
  return read_json(dataset_dir(id) / "meta.json");
}

Bytes Store::dataset_csv(const std::string& id) const {
  const json meta = dataset_meta(id);
  const Bytes b = read_file(dataset_dir(id) / "series.csv");
  require(sha_of(b) == meta.at("sha256").get<std::string>(), ErrorCode::ChecksumMismatch,
          "dataset " + id + " fails its checksum");
  return b;
}

std::vector<json> Store::list_datasets() const {
  std::vector<json> out;
  for (const auto& entry : fs::directory_iterator(root_ / "datasets")) {
    const auto id = entry.path().filename().string();
    if (entry.is_directory() && has_dataset(id)) out.push_back(dataset_meta(id));
  }
  std::sort(out.begin(), out.end(), [](const json& a, const json& b) {
    return a.at("id").get<std::string>() < b.at("id").get<std::string>();
  });
  return out;
}

}  // namespace tsvat::store
