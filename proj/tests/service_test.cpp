// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <json.hpp>
#include <random>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "o2v/image_io.hpp"
#include "o2v/perception.hpp"
#include "o2v/service.hpp"

namespace o2v {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::shared_ptr<const MapSnapshot> indexed_map() {
  auto s = std::make_shared<MapSnapshot>(make_empty_snapshot(
      Config{}, SceneBounds{Vec3(-1, -1, 0), Vec3(1, 1, 2)}, CameraIntrinsics{20, 20, 7.5, 5.5, 16, 12},
      kStubEmbeddingDim));
  s->retrieval.register_instance(stub_embed("door"), Vec3(1, 0, 1), 1);
  s->retrieval.register_instance(stub_embed("chair"), Vec3(0, 0.5, 0.4), 2);
  s->frames.push_back({7, Pose::look_at(Vec3(0, -0.9, 1), Vec3(0, 0, 0.5))});
  s->frame_counter = 1;
  s->digest = snapshot_digest(*s);
  return s;
}

QueryService service_for(std::shared_ptr<const MapSnapshot> snap) {
  return QueryService([snap] { return snap; }, [](const std::string& t) { return stub_embed(t); });
}

json ask(const QueryService& svc, const std::string& line) { return json::parse(svc.handle(line)); }

TEST(Service, QueryRanksMatchingInstance) {
  const auto svc = service_for(indexed_map());
  const json r = ask(svc, R"({"op":"query","text":"chair","top_n":5})");
  ASSERT_EQ(r["instances"].size(), 2u);
  EXPECT_EQ(r["instances"][0]["id"], 1);
  EXPECT_NEAR(r["instances"][0]["cosine"].get<double>(), 1.0, 1e-12);
  EXPECT_EQ(r["frame_counter"], 1);
  EXPECT_EQ(ask(svc, R"({"op":"query","text":"chair","top_n":1})")["instances"].size(), 1u);
}

TEST(Service, EmptyAndUnpublishedMaps) {
  const auto empty = std::make_shared<const MapSnapshot>(make_empty_snapshot(
      Config{}, SceneBounds{Vec3(-1, -1, 0), Vec3(1, 1, 2)}, CameraIntrinsics{20, 20, 7.5, 5.5, 16, 12},
      kStubEmbeddingDim));
  EXPECT_TRUE(ask(service_for(empty), R"({"op":"query","text":"chair"})")["instances"].empty());
  const QueryService none([] { return std::shared_ptr<const MapSnapshot>(); },
                          [](const std::string& t) { return stub_embed(t); });
  EXPECT_TRUE(ask(none, R"({"op":"query","text":"chair"})")["instances"].empty());
  EXPECT_EQ(ask(none, R"({"op":"stats"})")["frame_counter"], 0);
  EXPECT_TRUE(ask(none, R"({"op":"render","pose":{"frame":0},"out":"x.ppm"})").contains("error"));
}

TEST(Service, StatsReportsConsistentDigest) {
  const auto snap = indexed_map();
  const json r = ask(service_for(snap), R"({"op":"stats"})");
  EXPECT_EQ(r["instances"], 2);
  EXPECT_EQ(r["frames"], 1);
  EXPECT_TRUE(r["consistent"].get<bool>());
  EXPECT_EQ(r["digest"], r["digest_recomputed"]);
  EXPECT_EQ(r["digest"].get<std::string>().size(), 16u);
}

TEST(Service, RenderAndRelevanceWriteImages) {
  const auto svc = service_for(indexed_map());
  const fs::path dir = fs::temp_directory_path() / ("o2v_service_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string out = (dir / "view.ppm").string();
  const std::string depth = (dir / "view.depth").string();
  json r = ask(svc, json{{"op", "render"}, {"pose", {{"frame", 7}}}, {"out", out}, {"depth_out", depth}}.dump());
  ASSERT_TRUE(r.value("ok", false)) << r.dump();
  EXPECT_EQ(read_ppm(out).width, 16);
  EXPECT_EQ(read_depth(depth).height, 12);

  const json pose = {1, 0, 0, 0, 0, -1, 0, 1, 0, 0, -0.9, 1};
  r = ask(svc, json{{"op", "relevance"}, {"text", "chair"}, {"pose", pose}, {"out", out}}.dump());
  ASSERT_TRUE(r.value("ok", false)) << r.dump();
  EXPECT_EQ(read_ppm(out).height, 12);
  fs::remove_all(dir);
}

TEST(Service, ErrorsKeepJsonShape) {
  const auto svc = service_for(indexed_map());
  for (const char* bad : {"{", "[]", "42", R"({"op":"nope"})", R"({"text":"chair"})", R"({"op":"query"})",
                          R"({"op":"query","text":"x","top_n":-1})", R"({"op":"render","out":"x.ppm"})",
                          R"({"op":"render","pose":{"frame":99},"out":"x.ppm"})",
                          R"({"op":"render","pose":[1,2,3],"out":"x.ppm"})",
                          R"({"op":"render","pose":[2,0,0,0,2,0,0,0,2,0,0,0],"out":"x.ppm"})",
                          R"({"op":"relevance","pose":{"frame":7},"out":"x.ppm"})"}) {
    const json r = ask(svc, bad);
    EXPECT_TRUE(r.contains("error")) << bad;
  }
}

TEST(Service, FuzzedGarbageYieldsJson) {
  const auto svc = service_for(indexed_map());
  std::mt19937_64 rng(21);
  const std::string alphabet = "{}[]\":,opqueryrenderstats0123456789.-e \\\xff\xc3\x80";
  for (int i = 0; i < 3000; ++i) {
    std::string line;
    const int n = static_cast<int>(rng() % 64);
    for (int k = 0; k < n; ++k) {
      line += rng() % 3 == 0 ? static_cast<char>(rng() % 256) : alphabet[rng() % alphabet.size()];
    }
    const std::string reply = svc.handle(line);
    ASSERT_TRUE(json::accept(reply)) << reply;
    EXPECT_EQ(reply.find('\n'), std::string::npos);
  }
}

TEST(Service, StreamAnswersEachLine) {
  const auto svc = service_for(indexed_map());
  std::istringstream in("{\"op\":\"stats\"}\r\n\n{\"op\":\"bogus\"}\n{\"op\":\"query\",\"text\":\"door\"}\n");
  std::ostringstream out;
  svc.serve_stream(in, out);
  std::istringstream lines(out.str());
  std::string line;
  std::vector<json> replies;
  while (std::getline(lines, line)) replies.push_back(json::parse(line));
  ASSERT_EQ(replies.size(), 3u);
  EXPECT_TRUE(replies[0].contains("digest"));
  EXPECT_TRUE(replies[1].contains("error"));
  EXPECT_EQ(replies[2]["instances"][0]["id"], 0);
}

TEST(Endpoint, Parse) {
  EXPECT_EQ(parse_endpoint("127.0.0.1:7000"), std::make_pair(std::string("127.0.0.1"), 7000));
  EXPECT_EQ(parse_endpoint(":0").first, "127.0.0.1");
  EXPECT_THROW((void)parse_endpoint("nohost"), InputError);
  EXPECT_THROW((void)parse_endpoint("h:70000"), InputError);
  EXPECT_THROW((void)parse_endpoint("h:12x"), InputError);
}

TEST(Tcp, ConcurrentClientsAndLongLines) {
  const auto svc = service_for(indexed_map());
  TcpServer server(svc, "127.0.0.1", 0);
  std::thread runner([&] { server.run(); });
  std::vector<std::thread> clients;
  std::atomic<int> ok{0};
  for (int c = 0; c < 4; ++c) {
    clients.emplace_back([&] {
      LineClient client("127.0.0.1", server.port());
      for (int i = 0; i < 50; ++i) {
        const json r = json::parse(client.request(R"({"op":"query","text":"chair"})"));
        if (r["instances"][0]["id"] == 1) ++ok;
      }
    });
  }
  for (auto& t : clients) t.join();
  EXPECT_EQ(ok.load(), 200);

  LineClient client("127.0.0.1", server.port());
  const json big = json::parse(client.request(std::string(2 << 20, 'x')));
  EXPECT_TRUE(big.contains("error"));
  EXPECT_TRUE(json::parse(client.request(R"({"op":"stats"})")).contains("digest"));

  server.stop();
  runner.join();
}

}  // namespace
}  // namespace o2v
