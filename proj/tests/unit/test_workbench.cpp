#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_support.hpp"
#include "tsvat/codec.hpp"
#include "tsvat/hash.hpp"
#include "tsvat/jobs.hpp"
#include "tsvat/matrix_io.hpp"
#include "tsvat/service.hpp"
#include "tsvat/store.hpp"
#include "tsvat/workbench.hpp"

// resolv.h, pulled in by httplib, defines a _res macro that clashes with Eigen.
#include <httplib.h>

using namespace tsvat;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("tsvat-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

store::Bytes bytes_of(std::string_view s) { return store::Bytes(s.begin(), s.end()); }

json toy_model() {
  return {{"patch_len", 4}, {"d_model", 16}, {"n_layers", 1}, {"n_heads", 2}, {"ffn_dim", 32}};
}

json quick_finetune(const std::string& dataset) {
  return {{"dataset", dataset},
          {"model", toy_model()},
          {"finetune", {{"epochs", 2}, {"window_lengths", {16, 24}}}}};
}

workbench::Options options_for(const TempDir& dir, std::size_t workers = 2) {
  workbench::Options o;
  o.store_dir = dir.path() / "store";
  o.workers = workers;
  o.seed = 5;
  return o;
}

}  // namespace

TEST(Store, PutThenGetIsByteIdentical) {
  TempDir dir;
  store::Store s(dir.path());
  const auto id = s.create_run("embed", {{"x", 1}});
  s.mark_running(id);
  const store::Bytes payload{0, 1, 2, 255, 128};
  s.complete(id, {{"blob.bin", payload}, {"notes.txt", bytes_of("hello\n")}}, {{"rows", 2}});
  EXPECT_EQ(s.artifact(id, "blob.bin"), payload);
  EXPECT_EQ(s.artifact(id, "notes.txt"), bytes_of("hello\n"));
  const auto m = s.manifest(id);
  EXPECT_EQ(m.status, store::RunStatus::Done);
  EXPECT_EQ(m.artifacts.at("blob.bin").sha256, sha256_hex(std::span<const std::uint8_t>(payload)));
  EXPECT_EQ(m.result["rows"], 2);
  for (const auto& f : fs::directory_iterator(dir.path() / "runs" / id)) {
    EXPECT_FALSE(f.path().filename().string().starts_with(".")) << f.path();
  }
}

TEST(Store, UnknownIdsAreNotFound) {
  TempDir dir;
  store::Store s(dir.path());
  EXPECT_TSVAT_ERROR(s.manifest("finetune-0000"), ErrorCode::NotFound);
  EXPECT_TSVAT_ERROR(s.manifest("../etc"), ErrorCode::NotFound);
  EXPECT_TSVAT_ERROR(s.dataset_meta("nope"), ErrorCode::NotFound);
  const auto id = s.create_run("embed", json::object());
  EXPECT_TSVAT_ERROR(s.artifact(id, "blob.bin"), ErrorCode::NotFound);
}

TEST(Store, CorruptionIsDetected) {
  TempDir dir;
  store::Store s(dir.path());
  const auto id = s.create_run("embed", json::object());
  s.mark_running(id);
  s.complete(id, {{"blob.bin", store::Bytes(64, 7)}}, nullptr);
  {
    std::fstream f(s.artifact_path(id, "blob.bin"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(10);
    f.put(8);
  }
  EXPECT_TSVAT_ERROR(s.artifact(id, "blob.bin"), ErrorCode::ChecksumMismatch);
  s.put_dataset("d1", bytes_of("c0\n1\n"), json::object());
  {
    std::ofstream f(dir.path() / "datasets" / "d1" / "series.csv", std::ios::app);
    f << "2\n";
  }
  EXPECT_TSVAT_ERROR(s.dataset_csv("d1"), ErrorCode::ChecksumMismatch);
}

TEST(Store, StatusTransitionsAreMonotone) {
  TempDir dir;
  store::Store s(dir.path());
  const auto id = s.create_run("embed", json::object());
  EXPECT_TSVAT_ERROR(s.complete(id, {}, nullptr), ErrorCode::ValidationError);
  s.mark_running(id);
  EXPECT_TSVAT_ERROR(s.mark_running(id), ErrorCode::ValidationError);
  s.mark_failed(id, "boom");
  EXPECT_TSVAT_ERROR(s.mark_running(id), ErrorCode::ValidationError);
  EXPECT_EQ(s.manifest(id).error, "boom");
}

TEST(Store, IdenticalSubmissionsGetDistinctIds) {
  TempDir dir;
  store::Store s(dir.path());
  const auto a = s.create_run("finetune", {{"x", 1}});
  const auto b = s.create_run("finetune", {{"x", 1}});
  EXPECT_NE(a, b);
  EXPECT_EQ(s.list_runs().size(), 2u);
  EXPECT_LT(s.manifest(a).sequence, s.manifest(b).sequence);
}

TEST(Store, AbandonedRunsAreMarkedFailedOnOpen) {
  TempDir dir;
  std::string pending, running, done;
  {
    store::Store s(dir.path());
    pending = s.create_run("embed", json::object());
    running = s.create_run("embed", json::object());
    s.mark_running(running);
    done = s.create_run("embed", json::object());
    s.mark_running(done);
    s.complete(done, {{"a.bin", store::Bytes{1}}}, nullptr);
    std::ofstream(dir.path() / "runs" / running / ".a.bin.tmp-x") << "partial";
  }
  store::Store reopened(dir.path());
  EXPECT_EQ(reopened.recovered_runs(), 2u);
  EXPECT_EQ(reopened.manifest(pending).status, store::RunStatus::Failed);
  EXPECT_EQ(reopened.manifest(running).status, store::RunStatus::Failed);
  EXPECT_EQ(reopened.manifest(done).status, store::RunStatus::Done);
  EXPECT_FALSE(fs::exists(dir.path() / "runs" / running / ".a.bin.tmp-x"));
}

TEST(Jobs, ProgressIsMonotoneAndCompletes) {
  jobs::JobQueue q(2);
  std::atomic<int> ran{0};
  q.enqueue("a", [&](const jobs::ProgressFn& report) {
    report(0.5);
    report(0.2);
    report(7.0);
    ++ran;
  });
  q.enqueue("b", [&](const jobs::ProgressFn&) { ++ran; });
  q.wait("a");
  EXPECT_EQ(q.progress("a"), 1.0);
  q.wait_all();
  EXPECT_EQ(ran.load(), 2);
  EXPECT_TRUE(q.finished("b"));
  EXPECT_FALSE(q.known("c"));
  EXPECT_TSVAT_ERROR(q.enqueue("a", [](const jobs::ProgressFn&) {}), ErrorCode::ValidationError);
}

TEST(Codec, RoundTripsAndRejectsUnknownKeys) {
  finetune::FinetuneConfig fc;
  fc.window_lengths = {17, 40};
  fc.mask_percent = 0.5;
  fc.seed = 9;
  EXPECT_EQ(codec::to_json(codec::finetune_config_from_json(codec::to_json(fc))), codec::to_json(fc));
  EXPECT_TSVAT_ERROR(codec::finetune_config_from_json({{"mask_pct", 0.5}}), ErrorCode::ValidationError);
  EXPECT_TSVAT_ERROR(codec::finetune_config_from_json({{"epochs", "ten"}}), ErrorCode::ValidationError);
  EXPECT_TSVAT_ERROR(codec::finetune_config_from_json({{"epochs", 2.5}}), ErrorCode::ValidationError);
  const auto base = codec::encoder_config_from_json({{"preset", "base"}, {"seed", 3}});
  EXPECT_EQ(base, encoder::EncoderConfig::preset("base", 3));
  EXPECT_TSVAT_ERROR(codec::encoder_config_from_json({{"preset", "huge"}}), ErrorCode::ValidationError);
  synth::SynthConfig sc;
  sc.mtoy_anomalies = {{100, 64, 1}, {400, 32, std::nullopt}};
  EXPECT_EQ(codec::synth_config_from_json(codec::to_json(sc)).mtoy_anomalies, sc.mtoy_anomalies);
  finetune::RunRecord r;
  r.config_hash = "abc";
  r.loss_first = 2.0;
  r.loss_final = 1.0;
  r.improvement_percent = 50.0;
  r.best_epoch = 3;
  r.train_curve = {1.5, 1.2};
  r.valid_curve = {1.4, 1.1};
  const auto back = codec::run_record_from_json(codec::to_json(r));
  EXPECT_EQ(back.train_curve, r.train_curve);
  EXPECT_EQ(back.best_epoch, 3);
  const auto pp = codec::projection_params_from_json({{"method", "tsne"}, {"perplexity", 12}});
  EXPECT_EQ(pp.method, projection::Method::Tsne);
  EXPECT_EQ(pp.perplexity, 12.0);
  EXPECT_TSVAT_ERROR(codec::projection_params_from_json({{"method", "umap"}}), ErrorCode::ValidationError);
}

TEST(Workbench, DatasetsGenerateAndUpload) {
  TempDir dir;
  workbench::Workbench wb(options_for(dir));
  const auto meta = wb.create_dataset({{"kind", "s2"}, {"id", "s2"}, {"synth", {{"total_length", 1000}}}});
  EXPECT_EQ(meta["length"], 1000);
  EXPECT_EQ(meta["synth"]["seed"], 5);
  EXPECT_EQ(meta["ground_truth"]["anomalies"].size(), 2u);
  const auto auto_id = wb.create_dataset({{"kind", "s1"}, {"synth", {{"total_length", 500}}}});
  EXPECT_TRUE(auto_id["id"].get<std::string>().starts_with("s1-"));
  wb.create_dataset({{"id", "up"}, {"csv", "a,b\n1,2\n3,4\n5,6\n"}, {"sample_period", 60}});
  const auto up = wb.load_dataset("up");
  EXPECT_EQ(up.channels(), 2);
  EXPECT_EQ(up.values(2, 1), 6.0);
  EXPECT_EQ(up.sample_period, 60.0);
  EXPECT_EQ(wb.list_datasets().size(), 3u);
  EXPECT_TSVAT_ERROR(wb.create_dataset({{"id", "bad"}, {"csv", "a\nx\n"}}), ErrorCode::ValidationError);
  EXPECT_TSVAT_ERROR(wb.create_dataset({{"kind", "s9"}}), ErrorCode::ValidationError);
  EXPECT_TSVAT_ERROR(wb.create_dataset({{"kind", "s1"}, {"id", "../x"}}), ErrorCode::ValidationError);

  const auto values = wb.dataset_values("up", 1, 3, 2);
  EXPECT_EQ(values["values"], json::parse("[[4.0, 5.0]]"));
  EXPECT_TSVAT_ERROR(wb.dataset_values("up", 2, 9, 1), ErrorCode::IndexOutOfRange);
}

TEST(Workbench, InvalidSubmissionsAreRejectedBeforeEnqueue) {
  TempDir dir;
  workbench::Workbench wb(options_for(dir));
  wb.create_dataset({{"kind", "s1"}, {"id", "s1"}, {"synth", {{"total_length", 2000}}}});
  auto params = quick_finetune("s1");
  params["finetune"]["training_percent"] = 1.5;
  EXPECT_TSVAT_ERROR(wb.submit(workbench::JobKind::Finetune, params), ErrorCode::ValidationError);
  EXPECT_TSVAT_ERROR(wb.submit(workbench::JobKind::Finetune, {{"dataset", "missing"}}),
                     ErrorCode::ValidationError);
  EXPECT_TSVAT_ERROR(wb.submit({{"kind", "train"}, {"params", json::object()}}), ErrorCode::ValidationError);
  EXPECT_TSVAT_ERROR(wb.submit(workbench::JobKind::Project, {{"source", "embed-x"}}),
                     ErrorCode::ValidationError);
  EXPECT_TRUE(wb.store().list_runs().empty());
}

TEST(Workbench, FinetuneEmbedProjectPipeline) {
  TempDir dir;
  workbench::Workbench wb(options_for(dir));
  wb.create_dataset({{"kind", "s1"}, {"id", "s1"}, {"synth", {{"total_length", 2000}}}});

  const auto ft = wb.submit(workbench::JobKind::Finetune, quick_finetune("s1"));
  const auto twin = wb.submit(workbench::JobKind::Finetune, quick_finetune("s1"));
  EXPECT_NE(ft, twin);
  const auto snap = wb.wait(ft);
  ASSERT_EQ(snap.status, store::RunStatus::Done) << snap.error;
  EXPECT_EQ(snap.progress, 1.0);
  const auto m = wb.manifest(ft);
  EXPECT_EQ(m["params"]["finetune"]["seed"], 5);
  EXPECT_EQ(m["result"]["record"]["train_curve"].size(), 2u);
  EXPECT_TRUE(m["artifacts"].contains("model.ckpt"));
  EXPECT_TRUE(m["artifacts"].contains("curves.csv"));
  wb.wait(twin);
  EXPECT_EQ(wb.artifact(ft, "model.ckpt"), wb.artifact(twin, "model.ckpt"));

  const json embed_params{{"dataset", "s1"}, {"model_run", ft}, {"window", {{"length", 32}, {"stride", 4}}}};
  const auto em = wb.submit(workbench::JobKind::Embed, embed_params);
  const auto em2 = wb.submit(workbench::JobKind::Embed, embed_params);
  ASSERT_EQ(wb.wait(em).status, store::RunStatus::Done);
  ASSERT_EQ(wb.wait(em2).status, store::RunStatus::Done);
  EXPECT_EQ(wb.embeddings(em), wb.embeddings(em2));
  const Matrix rows = binary::matrix_from_bytes(wb.embeddings(em));
  EXPECT_EQ(rows.rows(), (2000 - 32) / 4 + 1);
  EXPECT_EQ(rows.cols(), 16);

  const auto sel = wb.selection(em, {0, 3});
  ASSERT_EQ(sel["windows"].size(), 2u);
  EXPECT_EQ(sel["windows"][0]["start"], 0);
  EXPECT_EQ(sel["windows"][0]["length"], 32);
  const auto series = wb.load_dataset("s1");
  const auto& w3 = sel["windows"][1];
  for (int t = 0; t < 32; ++t) {
    EXPECT_EQ(w3["values"][t][0].get<double>(), series.values(w3["start"].get<Index>() + t, 0));
  }
  EXPECT_TRUE(wb.selection(em, {})["windows"].empty());
  EXPECT_TSVAT_ERROR(wb.selection(em, {100000}), ErrorCode::IndexOutOfRange);

  const auto pj = wb.submit(workbench::JobKind::Project,
                            {{"source", em}, {"method", "pca_then_tsne"}, {"perplexity", 10}, {"iterations", 100}});
  ASSERT_EQ(wb.wait(pj).status, store::RunStatus::Done);
  const auto coords = binary::matrix_from_bytes(wb.projection(pj, {}));
  EXPECT_EQ(coords.rows(), rows.rows());
  EXPECT_EQ(coords.cols(), 2);
  EXPECT_EQ(wb.projection(em, {"pca_then_tsne", 10.0, 5}), wb.projection(pj, {}));
  EXPECT_TSVAT_ERROR(wb.projection(em, {"pca", std::nullopt, std::nullopt}), ErrorCode::NotFound);
  EXPECT_EQ(wb.selection(pj, {0})["windows"][0]["start"], 0);
  EXPECT_TSVAT_ERROR(wb.submit(workbench::JobKind::Project, {{"source", em}, {"perplexity", 5000}}),
                     ErrorCode::ValidationError);
}

TEST(Workbench, ZeroShotEmbeddingOfDefaultS1) {
  TempDir dir;
  workbench::Workbench wb(options_for(dir, 1));
  wb.create_dataset({{"kind", "s1"}, {"id", "s1"}});
  const auto em = wb.submit(workbench::JobKind::Embed, {{"dataset", "s1"}});
  ASSERT_EQ(wb.wait(em).status, store::RunStatus::Done);
  const auto m = wb.manifest(em);
  EXPECT_EQ(m["result"]["rows"], 4974);
  EXPECT_EQ(m["params"]["window"]["length"], 54);
  EXPECT_EQ(m["params"]["window"]["stride"], 2);
  const auto sel = wb.selection(em, {0});
  EXPECT_EQ(sel["windows"][0]["start"], 0);
  EXPECT_EQ(sel["windows"][0]["length"], 54);
}

TEST(Workbench, FailedJobsSurfaceInManifest) {
  TempDir dir;
  workbench::Workbench wb(options_for(dir));
  wb.create_dataset({{"kind", "s1"}, {"id", "s1"}, {"synth", {{"total_length", 2000}}}});
  auto params = quick_finetune("s1");
  params["finetune"]["learning_rate"] = 1e6;
  params["finetune"]["epochs"] = 5;
  const auto id = wb.submit(workbench::JobKind::Finetune, params);
  const auto snap = wb.wait(id);
  EXPECT_EQ(snap.status, store::RunStatus::Failed);
  EXPECT_FALSE(snap.error.empty());
  const auto m = wb.manifest(id);
  EXPECT_TRUE(m["result"]["record"]["diverged"].get<bool>());
  EXPECT_TRUE(m["artifacts"].empty());
}

TEST(Workbench, SweepProducesTableAndReport) {
  TempDir dir;
  workbench::Workbench wb(options_for(dir));
  wb.create_dataset({{"kind", "s1"}, {"id", "s1"}, {"synth", {{"total_length", 1500}}}});
  const auto id = wb.submit(
      workbench::JobKind::Sweep,
      {{"dataset", "s1"},
       {"model", toy_model()},
       {"grid", {{"epochs", 2}, {"dataset_percents", {0.2, 0.3}}, {"mask_percents", {0.25, 0.5}},
                 {"n_windows_options", {1, 2}}}}});
  ASSERT_EQ(wb.wait(id).status, store::RunStatus::Done);
  const auto table = wb.sweep_table(id);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 9);
  const auto report = wb.sweep_report(id);
  EXPECT_EQ(report["rows"], 8);
  EXPECT_EQ(report["correlation"]["names"].size(), 6u);
  EXPECT_EQ(report["f_scores"].size(), 5u);
  EXPECT_EQ(report["permutation_importance"].size(), 5u);
  EXPECT_FALSE(report["epoch_budget"].is_null());
}

TEST(Service, EndpointsRoundTrip) {
  TempDir dir;
  workbench::Workbench wb(options_for(dir));
  service::Server server(wb);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);

  auto res = cli.Post("/datasets", json{{"kind", "s2"}, {"id", "s2"}, {"synth", {{"total_length", 1200}}}}.dump(),
                      "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  res = cli.Get("/datasets");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body).size(), 1u);
  res = cli.Get("/datasets/s2/values?from=10&to=20&bucket=5");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["values"].size(), 2u);
  res = cli.Get("/datasets/s2/values?from=abc");
  EXPECT_EQ(res->status, 400);

  res = cli.Post("/jobs", json{{"kind", "finetune"}, {"params", quick_finetune("s2")}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 202);
  const auto ft = json::parse(res->body)["run_id"].get<std::string>();
  res = cli.Post("/jobs",
                 json{{"kind", "finetune"},
                      {"params", {{"dataset", "s2"}, {"finetune", {{"training_percent", 1.5}}}}}}
                     .dump(),
                 "application/json");
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["error"], "ValidationError");

  const auto wait_done = [&](const std::string& id) {
    for (int i = 0; i < 600; ++i) {
      auto r = cli.Get("/jobs/" + id);
      const auto j = json::parse(r->body);
      if (j["status"] == "done" || j["status"] == "failed") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    return json::object();
  };
  auto job = wait_done(ft);
  ASSERT_EQ(job["status"], "done");
  EXPECT_EQ(job["progress"], 1.0);

  res = cli.Post("/jobs",
                 json{{"kind", "embed"},
                      {"params", {{"dataset", "s2"}, {"model_run", ft}, {"window", {{"length", 32}, {"stride", 8}}}}}}
                     .dump(),
                 "application/json");
  const auto em = json::parse(res->body)["run_id"].get<std::string>();
  ASSERT_EQ(wait_done(em)["status"], "done");
  auto emb = cli.Get("/runs/" + em + "/embeddings");
  ASSERT_TRUE(emb);
  EXPECT_EQ(emb->get_header_value("Content-Type"), "application/octet-stream");
  const store::Bytes payload(emb->body.begin(), emb->body.end());
  EXPECT_EQ(emb->get_header_value("X-Checksum-SHA256"), sha256_hex(std::span<const std::uint8_t>(payload)));
  const Matrix rows = binary::matrix_from_bytes(payload);
  EXPECT_EQ(rows.rows(), (1200 - 32) / 8 + 1);
  auto again = cli.Get("/runs/" + em + "/embeddings");
  EXPECT_EQ(again->body, emb->body);

  res = cli.Post("/jobs", json{{"kind", "project"}, {"params", {{"source", em}, {"method", "pca"}}}}.dump(),
                 "application/json");
  const auto pj = json::parse(res->body)["run_id"].get<std::string>();
  ASSERT_EQ(wait_done(pj)["status"], "done");
  res = cli.Get("/runs/" + em + "/projection?method=pca&seed=5");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(binary::matrix_from_bytes(store::Bytes(res->body.begin(), res->body.end())).cols(), 2);
  res = cli.Get("/runs/" + em + "/projection?method=tsne");
  EXPECT_EQ(res->status, 404);

  res = cli.Post("/runs/" + em + "/selection", json{{"indices", {0, 1}}}.dump(), "application/json");
  ASSERT_TRUE(res);
  const auto sel = json::parse(res->body);
  EXPECT_EQ(sel["windows"][1]["start"], 8);
  res = cli.Post("/runs/" + em + "/selection", "[99999]", "application/json");
  EXPECT_EQ(res->status, 400);

  res = cli.Get("/runs/" + ft + "/manifest");
  EXPECT_EQ(json::parse(res->body)["status"], "done");
  res = cli.Get("/runs/unknown-run/manifest");
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(json::parse(res->body)["error"], "NotFound");
  res = cli.Get("/sweeps/" + ft + "/table");
  EXPECT_EQ(res->status, 400);
  server.stop();
}
