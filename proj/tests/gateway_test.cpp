#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <gtest/gtest.h>

#include "poolrank/embeddings.hpp"
#include "poolrank/error.hpp"
#include "poolrank/gateway_client.hpp"
#include "poolrank/rankers.hpp"
#include "support.hpp"

using namespace poolrank;
using nlohmann::json;
namespace pt = poolrank::testing;

namespace {

/// In-process gateway stand-in speaking the /embed, /rank, /health protocol.
class StubGateway {
 public:
  std::atomic<int> throttle_remaining{0};
  std::atomic<int> rank_calls{0};
  std::atomic<int> fail_status{0};
  std::string canned_raw = R"({"ranked_indices":[2,0,1,3,4,5,6,7]})";

  StubGateway() {
    server_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok","models":["stub","embed-model"]})", "application/json");
    });
    server_.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body);
      const auto texts = body.at("texts").get<std::vector<std::string>>();
      if (texts.empty()) {
        res.status = 400;
        res.set_content(R"({"detail":"empty texts"})", "application/json");
        return;
      }
      json vecs = json::array();
      for (const auto& t : texts) {
        // normalised, deterministic in the text
        const double a = static_cast<double>(t.size());
        const double n = std::sqrt(a * a + 1.0);
        vecs.push_back({a / n, 1.0 / n, 0.0});
      }
      res.set_content(json{{"model", body.at("model")}, {"dim", 3}, {"embeddings", vecs}}.dump(),
                      "application/json");
    });
    server_.Post("/rank", [this](const httplib::Request& req, httplib::Response& res) {
      ++rank_calls;
      {
        std::lock_guard lock(mutex_);
        requests_.push_back(json::parse(req.body));
      }
      if (fail_status) {
        res.status = fail_status;
        res.set_content(R"({"detail":"upstream exploded"})", "application/json");
        return;
      }
      if (throttle_remaining.fetch_sub(1) > 0) {
        res.status = 429;
        res.set_content(R"({"detail":"slow down"})", "application/json");
        return;
      }
      const auto body = json::parse(req.body);
      res.set_content(json{{"model", body.at("model")}, {"raw", canned_raw}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubGateway() {
    server_.stop();
    thread_.join();
  }

  [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::vector<json> requests() {
    std::lock_guard lock(mutex_);
    return requests_;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mutex_;
  std::vector<json> requests_;
};

EvidencePool sample_pool(const std::string& id) {
  std::vector<std::string> docs;
  for (int i = 0; i < 8; ++i) docs.push_back("Document " + std::to_string(i) + " about \"quotes\"\tand unicode \xc3\xa9.");
  return pt::make_pool(id, docs, presentation_order_for(17, id));
}

}  // namespace

TEST(Gateway, Health) {
  StubGateway stub;
  GatewayClient client(stub.url() + "/");
  EXPECT_EQ(client.base_url(), stub.url());
  const auto h = client.health();
  EXPECT_EQ(h.status, "ok");
  EXPECT_EQ(h.models, (std::vector<std::string>{"stub", "embed-model"}));
}

TEST(Gateway, UnreachableIsGatewayUnreachable) {
  std::string url;
  {
    StubGateway stub;
    url = stub.url();
  }
  GatewayClient client(url, 2);
  EXPECT_THROW((void)client.health(), GatewayUnreachable);
  EXPECT_THROW((void)client.rank("m", "p", 0.0), GatewayUnreachable);
  EXPECT_THROW((void)client.embed("m", {"x"}), GatewayUnreachable);
}

TEST(Gateway, EmbedIsOrderAlignedAndNormalised) {
  StubGateway stub;
  GatewayClient client(stub.url());
  const auto r = client.embed("embed-model", {"a", "abcd", "a"});
  EXPECT_EQ(r.dim, 3);
  ASSERT_EQ(r.embeddings.size(), 3u);
  EXPECT_EQ(r.embeddings[0], r.embeddings[2]);
  EXPECT_NE(r.embeddings[0], r.embeddings[1]);
  for (const auto& v : r.embeddings) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-6);
  }
  try {
    (void)client.embed("embed-model", {});
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.status(), 400);
  }
}

TEST(Gateway, EmbeddingProviderFillsCache) {
  StubGateway stub;
  GatewayClient client(stub.url());
  GatewayEmbeddingProvider provider(client);
  EmbeddingCache cache;
  const auto out = embed_texts(&provider, cache, {"x", "yy", "x"},
                               EmbedOptions{.model = "embed-model", .offline = false, .batch_size = 1});
  EXPECT_EQ(cache.size(), 2u);
  EXPECT_EQ(out[0].values, out[2].values);
}

TEST(Gateway, RankIsByteTransparent) {
  StubGateway stub;
  stub.canned_raw = "```json\n{\"ranked_indices\": [7,6,5,4,3,2,1,0]}\n```\n  trailing \xe2\x9c\x93";
  GatewayClient client(stub.url());
  const auto pool = sample_pool("c1");
  const auto prompt = build_prompt(pool);
  EXPECT_EQ(client.rank("stub", prompt, 0.0), stub.canned_raw);
  const auto reqs = stub.requests();
  ASSERT_EQ(reqs.size(), 1u);
  EXPECT_EQ(reqs[0]["prompt"].get<std::string>(), prompt);
  EXPECT_EQ(reqs[0]["temperature"].get<double>(), 0.0);
  (void)client.rank("stub", prompt, std::nullopt);
  EXPECT_FALSE(stub.requests()[1].contains("temperature"));
}

TEST(Gateway, ServerErrorIsBackendError) {
  StubGateway stub;
  stub.fail_status = 502;
  GatewayClient client(stub.url());
  try {
    (void)client.rank("stub", "p", 0.0);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.status(), 502);
    EXPECT_FALSE(e.throttled());
    EXPECT_NE(std::string(e.what()).find("upstream exploded"), std::string::npos);
  }
}

TEST(Gateway, LiveRankPersistsFixtureAndReplayMatches) {
  StubGateway stub;
  GatewayClient client(stub.url());
  pt::TempDir dir;
  FixtureStore store(dir / "fx");
  const auto pool = sample_pool("c7");
  const auto live = llm_rank(client, "stub", pool, &store);
  EXPECT_FALSE(live.fallback_used());
  EXPECT_EQ(live.ranker().str(), "llm:stub");
  const auto& o = pool.presentation_order;
  EXPECT_EQ(live.ranked_indices(), (RankedIndices{o[2], o[0], o[1], o[3], o[4], o[5], o[6], o[7]}));
  EXPECT_EQ(store.load("stub", "c7"), stub.canned_raw);
  const auto replayed = replay_rank(store, "stub", pool);
  EXPECT_EQ(replayed.ranked_indices(), live.ranked_indices());
  EXPECT_EQ(replayed.raw_response(), live.raw_response());
}

TEST(Gateway, PromptOrderSharedAcrossModels) {
  StubGateway stub;
  GatewayClient client(stub.url());
  const auto pool = sample_pool("c3");
  (void)llm_rank(client, "model-a", pool, nullptr);
  (void)llm_rank(client, "model-b", pool, nullptr);
  const auto reqs = stub.requests();
  ASSERT_EQ(reqs.size(), 2u);
  EXPECT_EQ(reqs[0]["prompt"], reqs[1]["prompt"]);
  EXPECT_NE(reqs[0]["model"], reqs[1]["model"]);
}

TEST(Gateway, RankStageRetriesThrottledCalls) {
  StubGateway stub;
  stub.throttle_remaining = 3;
  GatewayClient client(stub.url());
  pt::TempDir dir;
  std::vector<EvidencePool> pools;
  for (int c = 0; c < 4; ++c) pools.push_back(sample_pool("p" + std::to_string(c)));
  RankOptions opt;
  opt.rankers = {RankerId::parse("llm:stub")};
  opt.fixtures_dir = dir / "fx";
  opt.max_inflight = 2;
  opt.backoff_initial_ms = 1;
  const auto res = rank_pools(pools, pt::tokenizer(), opt, &client);
  EXPECT_EQ(res.rankings.size(), 4u);
  EXPECT_EQ(res.fallbacks, 0u);
  EXPECT_EQ(stub.rank_calls.load(), 4 + 3);

  // Completed responses are reused rather than requested again.
  const auto before = stub.rank_calls.load();
  const auto again = rank_pools(pools, pt::tokenizer(), opt, &client);
  EXPECT_EQ(stub.rank_calls.load(), before);
  EXPECT_EQ(again.rankings, res.rankings);
}

TEST(Gateway, ThrottlingBeyondRetryBudgetFailsStage) {
  StubGateway stub;
  stub.throttle_remaining = 1000;
  GatewayClient client(stub.url());
  RankOptions opt;
  opt.rankers = {RankerId::parse("llm:stub")};
  opt.max_retries = 2;
  opt.backoff_initial_ms = 1;
  try {
    (void)rank_pools({sample_pool("p0")}, pt::tokenizer(), opt, &client);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "rank");
    EXPECT_TRUE(pt::cause_is<BackendError>(e));
  }
  EXPECT_EQ(stub.rank_calls.load(), 3);
}

TEST(Gateway, UrlFromEnvironment) {
  ::setenv("POOLRANK_GATEWAY_URL", "http://h:1", 1);
  EXPECT_EQ(GatewayClient::url_from_env(), "http://h:1");
  ::setenv("POOLRANK_GATEWAY_URL", "", 1);
  EXPECT_FALSE(GatewayClient::url_from_env().has_value());
  ::unsetenv("POOLRANK_GATEWAY_URL");
}
