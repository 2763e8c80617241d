/*
 * Copyright 2026 The bioclap Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "bioclap/archive_ingest.h"
#include "bioclap/error.h"
#include "gateway/cli.h"
#include "gateway/service.h"
#include "httplib.h"
#include "json.hpp"
#include "synthetic_corpus.h"
#include "test_support.h"

namespace bioclap::tools {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bioclap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> Lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::vector<std::string> Split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// Small on-disk corpus taken through every CLI stage once per test binary.
class GatewayTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir();
    const fs::path root = dir_->path();
    fs::create_directories(root / "corpus" / "audio");
    std::mt19937_64 rng(7);
    const auto species = testing::SyntheticSpeciesSet(4);
    std::ofstream manifest(root / "manifest.jsonl");
    for (int s = 0; s < 4; ++s) {
      for (int n = 0; n < 6; ++n) {
        const Recording r = testing::SyntheticRecording(species[s], s, n);
        WriteWav(root / "corpus" / r.audio_path, testing::SynthesizeClip(species[s], rng, 4.0));
        manifest << RecordingToJsonLine(r) << '\n';
      }
    }
    manifest.close();
    const std::string p = root.string();
    Expect(Cli({"ingest", "--source", "synthetic", "--manifest", p + "/manifest.jsonl", "--out",
                p + "/records.jsonl", "--split-out", p + "/split.json", "--min-count", "5",
                "--test-fraction", "0.34", "--seed", "3"}));
    Expect(Cli({"caption", "--records", p + "/records.jsonl", "--out", p + "/captions.jsonl",
                "--template-only"}));
    Expect(Cli({"features", "--records", p + "/records.jsonl", "--corpus-root", p + "/corpus",
                "--out", p + "/features"}));
    train_ = Cli({"train", "--features", p + "/features", "--captions", p + "/captions.jsonl",
                  "--split", p + "/split.json", "--checkpoint", p + "/model.ck", "--loss-log",
                  p + "/loss.csv", "--epochs", "40", "--batch-size", "8", "--lr", "0.003",
                  "--embedding-dim", "32", "--hidden-dim", "64", "--audio-feature-dim", "32",
                  "--text-feature-dim", "32", "--buckets", "256"});
    Expect(train_);
    Expect(Cli({"index", "--features", p + "/features", "--records", p + "/records.jsonl",
                "--captions", p + "/captions.jsonl", "--checkpoint", p + "/model.ck", "--out",
                p + "/index"}));
  }

  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static void Expect(const CliResult& r) {
    ASSERT_EQ(r.code, 0) << r.err;
  }

  static std::string P(const std::string& name) { return (dir_->path() / name).string(); }

  static testing::TempDir* dir_;
  static CliResult train_;
};

testing::TempDir* GatewayTest::dir_ = nullptr;
CliResult GatewayTest::train_;

TEST_F(GatewayTest, PipelineWritesArtifacts) {
  EXPECT_EQ(Lines(testing::ReadFile(P("records.jsonl"))).size(), 24u);
  const CorpusSplit split = ReadSplit(P("split.json"));
  EXPECT_EQ(split.train_ids.size() + split.test_ids.size(), 24u);
  EXPECT_FALSE(split.test_ids.empty());
  EXPECT_TRUE(fs::exists(P("features/clips.jsonl")));
  const auto log = Lines(testing::ReadFile(P("loss.csv")));
  ASSERT_EQ(log.size(), 41u);
  EXPECT_EQ(log[0], "epoch,trainLoss,tau");
  const auto epochs = Lines(train_.out);
  ASSERT_EQ(epochs.size(), 40u);
  EXPECT_EQ(epochs[0].rfind("epoch 1 loss ", 0), 0u);
  EXPECT_TRUE(fs::exists(P("index/embeddings.bin")));
  const auto captions = Lines(testing::ReadFile(P("captions.jsonl")));
  EXPECT_EQ(captions.size(), 48u);  // common and scientific form per recording
}

TEST_F(GatewayTest, SearchPrintsTsv) {
  const CliResult r = Cli({"search", "--index", P("index"), "--query", "whale clicks", "--k", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = Lines(r.out);
  ASSERT_EQ(lines.size(), 5u);
  double last = 2.0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto fields = Split(lines[i], '\t');
    ASSERT_EQ(fields.size(), 4u) << lines[i];
    EXPECT_EQ(fields[0], std::to_string(i + 1));
    const double score = std::stod(fields[1]);
    EXPECT_LE(score, last);
    last = score;
    EXPECT_FALSE(fields[2].empty());
    EXPECT_EQ(fields[3].rfind("The ", 0), 0u);
  }
}

TEST_F(GatewayTest, SearchFindsSpeciesByName) {
  const auto species = testing::SyntheticSpeciesSet(4);
  for (const auto& sp : species) {
    const CliResult r = Cli({"search", "--index", P("index"), "--query", "The sound of a " + sp.common,
                             "--k", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto top = Split(Lines(r.out)[0], '\t');
    EXPECT_NE(top[3].find(sp.common), std::string::npos) << sp.common;
  }
}

TEST_F(GatewayTest, EvalReportsAreJson) {
  const CliResult r = Cli({"eval", "retrieval", "--index", P("index"), "--test", P("split.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  ASSERT_EQ(j["reports"].size(), 2u);
  EXPECT_EQ(j["reports"][0]["metricName"], "mAP@10");
  EXPECT_EQ(j["reports"][1]["metricName"], "precision@1");
  for (const auto& rep : j["reports"]) {
    EXPECT_GE(rep["value"].get<double>(), 0.0);
    EXPECT_LE(rep["value"].get<double>(), 1.0);
  }
  const CorpusSplit split = ReadSplit(P("split.json"));
  EXPECT_EQ(j["reports"][0]["queryCount"].get<std::size_t>(), split.test_ids.size());

  const CliResult oracle = Cli({"eval", "oracle", "--index", P("index")});
  ASSERT_EQ(oracle.code, 0) << oracle.err;
  EXPECT_EQ(json::parse(oracle.out)["reports"][0]["value"].get<double>(), 1.0);

  const CliResult zs = Cli({"eval", "zero-shot", "--index", P("index"), "--prompt-template",
                            "The sound of a {label}"});
  ASSERT_EQ(zs.code, 0) << zs.err;
  EXPECT_EQ(json::parse(zs.out)["reports"][0]["metricName"], "zeroShotAccuracy");
}

TEST_F(GatewayTest, ClassifyClip) {
  const VectorIndex index = VectorIndex::Load(P("index"));
  const IndexEntry& e = index.entries().front();
  const CliResult r = Cli({"classify", "--index", P("index"), "--clip", e.clip_id, "--labels",
                           "owl,frog"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["scores"].size(), 2u);
  EXPECT_TRUE(j["argmaxLabel"] == "owl" || j["argmaxLabel"] == "frog");
}

TEST_F(GatewayTest, EmbedText) {
  const CliResult r = Cli({"embed", "--checkpoint", P("model.ck"), "--text", "owl hooting"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  double sq = 0;
  for (double v : j) sq += v * v;
  EXPECT_NEAR(sq, 1.0, 1e-5);
}

TEST(CliTest, UnknownSubcommandFails) {
  const CliResult r = Cli({"frobnicate"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("ingest"), std::string::npos);
  EXPECT_NE(r.err.find("search"), std::string::npos);
}

TEST(CliTest, RuntimeErrorIsMachineReadable) {
  const CliResult r = Cli({"ingest", "--source", "synthetic", "--manifest", "/nonexistent/m.jsonl",
                           "--out", "/tmp/x.jsonl"});
  EXPECT_EQ(r.code, 1);
  const json j = json::parse(Lines(r.err).at(0));
  EXPECT_EQ(j["error"]["code"], "Io");
}

TEST(CliTest, BadSourceIsUsageError) {
  const CliResult r = Cli({"ingest", "--source", "nowhere", "--manifest", "m", "--out", "o"});
  EXPECT_NE(r.code, 0);
}

class HttpGatewayTest : public GatewayTest {
 protected:
  void SetUp() override {
    ServiceConfig config;
    config.index_path = P("index");
    config.admin_token = "s3cret";
    config.port = 0;
    service_ = std::make_unique<GatewayService>(config);
    service_->Reload();
    server_ = std::make_unique<HttpServer>(*service_);
    port_ = server_->Bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_->Run(); });
    server_->WaitUntilReady();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_->Stop();
    thread_.join();
  }

  httplib::Result PostJson(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }

  std::unique_ptr<GatewayService> service_;
  std::unique_ptr<HttpServer> server_;
  std::thread thread_;
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(HttpGatewayTest, SearchIsDeterministicAndMatchesCli) {
  const json req{{"text", "The sound of a Cobalt Cricket"}, {"k", 7}};
  const auto a = PostJson("/v1/search", req);
  const auto b = PostJson("/v1/search", req);
  ASSERT_TRUE(a && b);
  ASSERT_EQ(a->status, 200) << a->body;
  EXPECT_EQ(a->body, b->body);
  EXPECT_EQ(a->get_header_value("Content-Type"), "application/json");
  const json j = json::parse(a->body);
  ASSERT_EQ(j["results"].size(), 7u);

  const CliResult cli = Cli({"search", "--index", P("index"), "--query",
                             "The sound of a Cobalt Cricket", "--k", "7"});
  const auto lines = Lines(cli.out);
  ASSERT_EQ(lines.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) {
    const auto fields = Split(lines[i], '\t');
    const json& hit = j["results"][i];
    EXPECT_EQ(hit["rank"], i + 1);
    EXPECT_EQ(hit["clipId"], fields[2]);
    EXPECT_EQ(hit["caption"], fields[3]);
    EXPECT_NEAR(hit["score"].get<double>(), std::stod(fields[1]), 5e-7);
    EXPECT_EQ(hit["audioUrl"], "/v1/audio/" + fields[2]);
    EXPECT_TRUE(hit["speciesCommon"].is_string());
  }
}

TEST_F(HttpGatewayTest, SearchValidation) {
  auto empty = PostJson("/v1/search", {{"text", "  "}, {"k", 3}});
  EXPECT_EQ(empty->status, 400);
  EXPECT_EQ(json::parse(empty->body)["error"]["code"], "InvalidArgument");
  EXPECT_EQ(PostJson("/v1/search", {{"text", "owl"}, {"k", 0}})->status, 400);
  EXPECT_EQ(PostJson("/v1/search", {{"text", "owl"}, {"k", "ten"}})->status, 400);
  EXPECT_EQ(client_->Post("/v1/search", "{not json", "application/json")->status, 400);
  const auto defaulted = PostJson("/v1/search", {{"text", "owl"}});
  ASSERT_EQ(defaulted->status, 200);
  EXPECT_EQ(json::parse(defaulted->body)["results"].size(), 10u);
  const auto capped = PostJson("/v1/search", {{"text", "owl"}, {"k", 100000}});
  ASSERT_EQ(capped->status, 200);
  EXPECT_EQ(json::parse(capped->body)["results"].size(), 24u);
}

TEST_F(HttpGatewayTest, ClassifyByClipAndUpload) {
  const VectorIndex index = VectorIndex::Load(P("index"));
  const IndexEntry& e = index.entries().front();
  const auto ok = PostJson("/v1/classify", {{"clipId", e.clip_id}, {"labels", {"a", "b", "c"}}});
  ASSERT_EQ(ok->status, 200) << ok->body;
  const json j = json::parse(ok->body);
  EXPECT_EQ(j["scores"].size(), 3u);
  EXPECT_EQ(PostJson("/v1/classify", {{"clipId", "nope"}, {"labels", {"a"}}})->status, 404);
  EXPECT_EQ(PostJson("/v1/classify", {{"clipId", e.clip_id}, {"labels", json::array()}})->status, 400);

  const std::string wav = testing::ReadFile(e.audio_path);
  httplib::MultipartFormDataItems items{{"audio", wav, "clip.wav", "audio/wav"},
                                        {"labels", e.species_common.value(), "", ""},
                                        {"labels", "something else", "", ""}};
  const auto up = client_->Post("/v1/classify", items);
  ASSERT_EQ(up->status, 200) << up->body;
  const json u = json::parse(up->body);
  ASSERT_EQ(u["scores"].size(), 2u);
  // The uploaded clip is the indexed clip, so its scores match the clip-id path.
  const auto by_id = PostJson("/v1/classify", {{"clipId", e.clip_id},
                                              {"labels", {e.species_common.value(), "something else"}}});
  const json k = json::parse(by_id->body);
  EXPECT_NEAR(u["scores"][0]["score"].get<double>(), k["scores"][0]["score"].get<double>(), 1e-5);
}

TEST_F(HttpGatewayTest, AudioStreamsWav) {
  const VectorIndex index = VectorIndex::Load(P("index"));
  const std::string id = index.entries()[3].clip_id;
  const auto r = client_->Get("/v1/audio/" + id);
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "audio/wav");
  EXPECT_EQ(r->body.substr(0, 4), "RIFF");
  const AudioClip clip = DecodeWav(std::vector<std::uint8_t>(r->body.begin(), r->body.end()));
  EXPECT_EQ(clip.samples.size(), 480000u);
  EXPECT_EQ(client_->Get("/v1/audio/unknown")->status, 404);
}

TEST_F(HttpGatewayTest, HealthAndAdminReload) {
  const json h = json::parse(client_->Get("/v1/health")->body);
  EXPECT_EQ(h["indexLoaded"], true);
  EXPECT_EQ(h["clips"], 24);
  EXPECT_EQ(h["dim"], 32);
  EXPECT_EQ(client_->Post("/v1/admin/reload", "", "application/json")->status, 401);
  httplib::Headers bad{{"Authorization", "Bearer wrong"}};
  EXPECT_EQ(client_->Post("/v1/admin/reload", bad, "", "application/json")->status, 401);
  httplib::Headers good{{"Authorization", "Bearer s3cret"}};
  const auto r = client_->Post("/v1/admin/reload", good, "", "application/json");
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(json::parse(r->body)["clips"], 24);
}

TEST_F(HttpGatewayTest, FailedReloadKeepsServingPreviousSnapshot) {
  fs::rename(P("index"), P("index.moved"));
  httplib::Headers good{{"Authorization", "Bearer s3cret"}};
  const auto r = client_->Post("/v1/admin/reload", good, "", "application/json");
  fs::rename(P("index.moved"), P("index"));
  EXPECT_EQ(r->status, 500);
  EXPECT_EQ(PostJson("/v1/search", {{"text", "owl"}, {"k", 2}})->status, 200);
}

TEST_F(HttpGatewayTest, ConcurrentSearchesDuringReload) {
  std::atomic<int> failures{0};
  std::vector<std::thread> readers;
  for (int t = 0; t < 4; ++t) {
    readers.emplace_back([&] {
      httplib::Client c("127.0.0.1", port_);
      for (int i = 0; i < 15; ++i) {
        const auto r = c.Post("/v1/search", R"({"text": "owl", "k": 5})", "application/json");
        if (!r || r->status != 200) ++failures;
      }
    });
  }
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(service_->AdminReload("Bearer s3cret").status, 200);
  }
  for (auto& t : readers) t.join();
  EXPECT_EQ(failures.load(), 0);
}

TEST(ServiceTest, NotLoadedIs503) {
  ServiceConfig config;
  config.index_path = "/nonexistent";
  GatewayService service(config);
  EXPECT_EQ(service.Search(R"({"text": "owl"})").status, 503);
  EXPECT_EQ(service.Classify(R"({"clipId": "a", "labels": ["x"]})").status, 503);
  EXPECT_EQ(service.Audio("a").status, 503);
  EXPECT_EQ(json::parse(service.Health().body)["indexLoaded"], false);
}

TEST(ServiceTest, ConfigFileAndEnvironment) {
  testing::TempDir dir;
  testing::WriteFile(dir / "gw.json", R"({"indexPath": "idx", "port": 9123,
    "captionToken": "from-file", "maxInFlightClientCalls": 2})");
  ::setenv("BIOCLAP_CAPTION_TOKEN", "from-env", 1);
  ::setenv("BIOCLAP_ADMIN_TOKEN", "admin-env", 1);
  const ServiceConfig c = LoadServiceConfig(dir / "gw.json");
  ::unsetenv("BIOCLAP_CAPTION_TOKEN");
  ::unsetenv("BIOCLAP_ADMIN_TOKEN");
  EXPECT_EQ(c.index_path, dir / "idx");
  EXPECT_EQ(c.port, 9123);
  EXPECT_EQ(c.caption_token, "from-env");
  EXPECT_EQ(c.admin_token, "admin-env");
  EXPECT_EQ(c.max_in_flight_client_calls, 2u);

  ServiceConfig bad;
  bad.index_path = "x";
  bad.port = 70000;
  EXPECT_THROW(bad.Validate(), bioclap::Error);
}

}  // namespace
}  // namespace bioclap::tools
