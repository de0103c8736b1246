#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>
#include <thread>

#include "lore/app/cli.hpp"
#include "support/oracles.hpp"

namespace lore::app {
namespace {

const fs::path kHermetic = fs::path(LORE_FIXTURE_DIR) / "hermetic";

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

/// Builds the hermetic index once into a temp dir.
class AppTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new oracle::TempDir("app");
    const auto r = run({"--config", (kHermetic / "config.json").string(), "index", "--corpus",
                        (kHermetic / "corpus.jsonl").string(), "--out", index_dir().string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path index_dir() { return *dir_ / "index"; }
  static std::vector<std::string> base(const std::string& sub) {
    return {"--config", (kHermetic / "config.json").string(), sub, "--index", index_dir().string()};
  }
  static oracle::TempDir* dir_;
};

oracle::TempDir* AppTest::dir_ = nullptr;

TEST_F(AppTest, IndexWritesAllFiles) {
  EXPECT_TRUE(fs::exists(index_dir() / kPassagesFile));
  EXPECT_TRUE(fs::exists(index_dir() / kSparseFile));
  EXPECT_TRUE(fs::exists(index_dir() / kDenseFile));
  const auto r = run({"--config", (kHermetic / "config.json").string(), "index", "--corpus",
                      (kHermetic / "corpus.jsonl").string(), "--out", (*dir_ / "again").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("num_passages"), 10);
  EXPECT_EQ(oracle::slurp(*dir_ / "again" / kSparseFile), oracle::slurp(index_dir() / kSparseFile));
}

TEST_F(AppTest, IndexMissingCorpusFails) {
  const auto r = run({"--config", (kHermetic / "config.json").string(), "index", "--corpus",
                      (*dir_ / "nope.jsonl").string(), "--out", (*dir_ / "x").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nope.jsonl"), std::string::npos);
}

TEST_F(AppTest, IndexCorruptEmbeddingsNamesLine) {
  const auto emb = dir_->write("emb.jsonl",
                               "{\"id\":\"p01\",\"vector\":[1,0]}\n{\"id\":\"p02\",\"vector\":[0,1]}\n"
                               "{\"id\":\"p03\",\"vector\":[\"bad\",1]}\n");
  const auto r = run({"--config", (kHermetic / "config.json").string(), "index", "--corpus",
                      (kHermetic / "corpus.jsonl").string(), "--embeddings", emb.string(), "--out",
                      (*dir_ / "y").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(":3"), std::string::npos) << r.err;
}

TEST_F(AppTest, QueryPrintsSelection) {
  auto args = base("query");
  args.push_back("Who is the quarterback for the Panthers?");
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("selected_answer"), "Cam Newton");
  EXPECT_EQ(j.at("context_rank"), 3);
  EXPECT_EQ(j.at("no_evidence"), false);
  EXPECT_EQ(j.at("contexts").size(), 10u);
}

TEST_F(AppTest, QueryNoEvidence) {
  auto args = base("query");
  args.push_back("Zeppelin marmalade aardvark");
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("no_evidence"), true);
}

TEST_F(AppTest, TopKZeroIsAUsageError) {
  auto args = base("query");
  args.insert(args.end(), {"Who?", "--top-k", "0"});
  const auto r = run(args);
  EXPECT_NE(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  EXPECT_NE(run({"frobnicate"}).code, 0);
}

TEST_F(AppTest, MissingIndexFails) {
  const auto r = run({"--config", (kHermetic / "config.json").string(), "query", "--index",
                      (*dir_ / "missing").string(), "Who?"});
  EXPECT_EQ(r.code, 1);
}

TEST_F(AppTest, EvalWritesTraceAndSummary) {
  auto args = base("eval");
  const auto out = *dir_ / "eval";
  args.insert(args.end(), {"--dataset", (kHermetic / "dataset.jsonl").string(), "--out", out.string()});
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(oracle::slurp(out / "summary.json"));
  EXPECT_EQ(summary.at("n"), 4);
  EXPECT_DOUBLE_EQ(summary.at("em_pct").get<double>(), 75.0);
  EXPECT_EQ(summary.at("no_evidence"), 1);
  std::istringstream trace(oracle::slurp(out / "trace.jsonl"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(trace, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("question_id"));
    EXPECT_TRUE(j.contains("em"));
    ++lines;
  }
  EXPECT_EQ(lines, 4u);
}

/// Sidecar that embeds like the stub reader but fails every generate call.
class BrokenSidecar {
 public:
  BrokenSidecar() {
    server_.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
      const auto texts = nlohmann::json::parse(req.body).at("texts").get<std::vector<std::string>>();
      nlohmann::json vectors = nlohmann::json::array();
      for (const auto& t : texts) vectors.push_back(hashed_embedding(t, 256));
      res.set_content(nlohmann::json{{"vectors", vectors}, {"dim", 256}}.dump(), "application/json");
    });
    server_.Post("/generate", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~BrokenSidecar() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST_F(AppTest, EvalFailureFractionSetsExitCode) {
  BrokenSidecar sidecar;
  const auto cfg = dir_->write("fast.json", R"({"reader": {"retry_backoff_ms": 1, "max_retries": 0}})");
  const auto r = run({"--config", cfg.string(), "eval", "--index", index_dir().string(), "--reader-endpoint",
                      sidecar.url(), "--dataset", (kHermetic / "dataset.jsonl").string(), "--out",
                      (*dir_ / "evalfail").string(), "--max-failure-fraction", "0.5"});
  EXPECT_EQ(r.code, 3) << r.err;
  const auto summary = nlohmann::json::parse(oracle::slurp(*dir_ / "evalfail" / "summary.json"));
  EXPECT_EQ(summary.at("failed"), 3);
  EXPECT_EQ(summary.at("no_evidence"), 1);

  auto ok = base("eval");
  ok.insert(ok.end(), {"--dataset", (kHermetic / "dataset.jsonl").string(), "--out", (*dir_ / "evalok").string(),
                       "--max-failure-fraction", "0"});
  EXPECT_EQ(run(ok).code, 0);
}

TEST(Config, ParsesAndResolvesRelativePaths) {
  const auto c = load_config_file(kHermetic / "config.json");
  EXPECT_EQ(c.stub_table_path, kHermetic / "stub_table.jsonl");
  EXPECT_EQ(c.pipeline.top_k, 10);
  EXPECT_EQ(c.max_failure_fraction, 0.0);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"pipeline": {"top_k": "ten"}})")), Error);
  auto bad = parse_config(nlohmann::json::parse(R"({"port": 70000})"));
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Config, EnvironmentVariableIsUsed) {
  oracle::TempDir dir("cfg");
  const auto path = dir.write("c.json", R"({"pipeline": {"top_k": 4}, "port": 9001})");
  ::setenv(kConfigEnv, path.c_str(), 1);
  const auto c = load_config(std::nullopt);
  ::unsetenv(kConfigEnv);
  EXPECT_EQ(c.pipeline.top_k, 4);
  EXPECT_EQ(c.port, 9001);
  EXPECT_THROW(load_config(dir / "missing.json"), Error);
}

TEST(Config, ReaderSelection) {
  AppConfig c;
  EXPECT_THROW(make_reader_config(c), Error);
  c.reader_endpoint = "http://127.0.0.1:1";
  EXPECT_TRUE(make_reader_config(c).endpoint_url.has_value());
  c.stub_table_path = kHermetic / "stub_table.jsonl";
  EXPECT_THROW(make_reader_config(c), Error);
}

/// Fails every generate call; embeds through a stub.
class DownReader final : public Reader {
 public:
  GeneratedAnswer generate(std::string_view, const Passage&) const override { throw ReaderError("sidecar down"); }
  std::vector<Vector> embed(std::span<const std::string> t) const override { return stub_.embed(t); }

 private:
  StubReader stub_{{}};
};

class ServiceTest : public ::testing::Test {
 protected:
  void start(std::unique_ptr<Reader> reader) {
    oracle::TempDir tmp("svc");
    AppConfig cfg = load_config_file(kHermetic / "config.json");
    cfg.corpus_path = kHermetic / "corpus.jsonl";
    cfg.index_dir = tmp / "index";
    build_indexes(cfg);
    engine_ = load_engine(cfg.index_dir, make_reader_config(cfg));
    if (reader) engine_->reader = std::move(reader);
    service_ = std::make_unique<QaService>(*engine_, cfg.pipeline);
    port_ = service_->bind_any();
    thread_ = std::thread([this] { service_->listen(); });
    service_->wait_until_ready();
  }
  void TearDown() override {
    if (service_) service_->stop();
    if (thread_.joinable()) thread_.join();
  }
  httplib::Result ask(const std::string& body) {
    httplib::Client client("127.0.0.1", port_);
    return client.Post("/ask", body, "application/json");
  }

  std::unique_ptr<Engine> engine_;
  std::unique_ptr<QaService> service_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(ServiceTest, AskAndHealth) {
  start(nullptr);
  auto res = ask(R"({"question": "Who is the quarterback for the Panthers?", "top_k": 5})");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto j = nlohmann::json::parse(res->body);
  EXPECT_EQ(j.at("answer"), "Cam Newton");
  EXPECT_EQ(j.at("context_rank"), 3);
  EXPECT_EQ(j.at("contexts").size(), 5u);

  httplib::Client client("127.0.0.1", port_);
  auto health = client.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(nlohmann::json::parse(health->body).at("status"), "ok");
}

TEST_F(ServiceTest, ClientErrors) {
  start(nullptr);
  EXPECT_EQ(ask("not json")->status, 400);
  EXPECT_EQ(ask(R"({"question": ""})")->status, 400);
  EXPECT_EQ(ask(R"({"question": 7})")->status, 400);
  EXPECT_EQ(ask(R"({"question": "Who?", "top_k": 0})")->status, 400);
  EXPECT_EQ(ask(R"([1, 2])")->status, 400);
  EXPECT_EQ(ask(R"({"question": "Zeppelin marmalade aardvark"})")->status, 422);
}

TEST_F(ServiceTest, ReaderOutageIs503) {
  start(std::make_unique<DownReader>());
  EXPECT_EQ(ask(R"({"question": "Who is the quarterback for the Panthers?"})")->status, 503);
}

}  // namespace
}  // namespace lore::app
