#include <cmath>
#include <random>

#include <nlohmann/json.hpp>
#include <gtest/gtest.h>

#include "poolrank/error.hpp"
#include "poolrank/rankers.hpp"
#include "support.hpp"

using namespace poolrank;
namespace pt = poolrank::testing;

namespace {

using Docs = std::vector<std::vector<std::string>>;

// Three-document toy corpus with hand-set term frequencies.
//   d0 = a b a c   (len 4)
//   d1 = a d       (len 2)
//   d2 = b e e     (len 3)
// avgdl = 3, N = 3.
const Docs kToyCorpus{{"a", "b", "a", "c"}, {"a", "d"}, {"b", "e", "e"}};

// Direct evaluation of the Okapi formula for the toy corpus, written out term
// by term. idf(t) = ln((N - df + 0.5) / (df + 0.5)); terms with df = 2 get a
// negative idf and take 0.25 * mean idf instead.
struct ToyOracle {
  double idf1 = std::log(2.5 / 1.5);   // df = 1: c, d, e
  double idf2 = std::log(1.5 / 2.5);   // df = 2: a, b
  double eps = 0.25 * (2 * idf2 + 3 * idf1) / 5.0;

  static double tf_part(double f, double len) {
    return f * 2.5 / (f + 1.5 * (0.25 + 0.75 * len / 3.0));
  }
};

}  // namespace

TEST(Bm25, ToyCorpusMatchesDirectFormula) {
  const ToyOracle o;
  const std::vector<std::string> q1{"a", "e"};
  const auto s1 = bm25_scores(q1, kToyCorpus);
  ASSERT_EQ(s1.size(), 3u);
  EXPECT_NEAR(s1[0], o.eps * ToyOracle::tf_part(2, 4), 1e-9);
  EXPECT_NEAR(s1[1], o.eps * ToyOracle::tf_part(1, 2), 1e-9);
  EXPECT_NEAR(s1[2], o.idf1 * ToyOracle::tf_part(2, 3), 1e-9);

  const std::vector<std::string> q2{"c", "b", "z"};
  const auto s2 = bm25_scores(q2, kToyCorpus);
  EXPECT_NEAR(s2[0], o.idf1 * ToyOracle::tf_part(1, 4) + o.eps * ToyOracle::tf_part(1, 4), 1e-9);
  EXPECT_NEAR(s2[1], 0.0, 1e-9);
  EXPECT_NEAR(s2[2], o.eps * ToyOracle::tf_part(1, 3), 1e-9);
}

TEST(Bm25, ToyCorpusFrozenValues) {
  // Frozen from an independent evaluation with the rank_bm25 package (BM25Okapi).
  const std::vector<std::string> q1{"a", "e"};
  const auto s1 = bm25_scores(q1, kToyCorpus);
  EXPECT_NEAR(s1[0], 0.032956491855870365, 1e-9);
  EXPECT_NEAR(s1[1], 0.030048566103881808, 1e-9);
  EXPECT_NEAR(s1[2], 0.7297508910942725, 1e-9);

  const std::vector<std::string> q2{"c", "b", "z"};
  const auto s2 = bm25_scores(q2, kToyCorpus);
  EXPECT_NEAR(s2[0], 0.4664060043080785, 1e-9);
  EXPECT_NEAR(s2[1], 0.0, 1e-9);
  EXPECT_NEAR(s2[2], 0.025541281188299535, 1e-9);
}

TEST(Bm25, RepeatedQueryTermCountsTwice) {
  const std::vector<std::string> once{"e"};
  const std::vector<std::string> twice{"e", "e"};
  EXPECT_NEAR(bm25_scores(twice, kToyCorpus)[2], 2 * bm25_scores(once, kToyCorpus)[2], 1e-12);
}

TEST(Bm25, EmptyDocumentsScoreZero) {
  const Docs empty(8);
  const std::vector<std::string> q{"a"};
  for (double s : bm25_scores(q, empty)) EXPECT_EQ(s, 0.0);
}

TEST(Bm25, UniqueTermRanksItsDocumentFirst) {
  Docs docs(8);
  for (int i = 0; i < 8; ++i) docs[i] = {"common", "filler" + std::to_string(i)};
  docs[5].push_back("needle");
  const auto r = bm25_rank(TokenSet{"needle"}, docs);
  EXPECT_EQ(r.ranked[0], 5);
  EXPECT_GT(r.scores[5], 0.0);
}

TEST(Bm25, EmptyQueryGivesIdentity) {
  Docs docs(8, {"x", "y"});
  const auto r = bm25_rank(TokenSet{}, docs);
  EXPECT_EQ(r.ranked, (RankedIndices{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(Bm25, RequiresEightDocuments) {
  EXPECT_THROW((void)bm25_rank(TokenSet{"a"}, kToyCorpus), InvalidRanking);
}

TEST(OrderByScore, TiesBreakByIndex) {
  EXPECT_EQ(order_by_score({1, 3, 3, 0, 1, 2, 3, 0}), (RankedIndices{1, 2, 6, 5, 0, 4, 3, 7}));
}

TEST(Mmr, LambdaOneEqualsBm25) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    Docs terms(8);
    std::vector<TokenSet> sets(8);
    std::uniform_int_distribution<int> len(0, 12), word(0, 15);
    for (int d = 0; d < 8; ++d) {
      const int n = len(rng);
      for (int i = 0; i < n; ++i) terms[d].push_back("w" + std::to_string(word(rng)));
      sets[d] = TokenSet(terms[d].begin(), terms[d].end());
    }
    const auto q = pt::random_token_set(rng, 16, 4);
    const auto bm = bm25_rank(q, terms);
    EXPECT_EQ(mmr_rank(bm.scores, sets, MmrConfig{1.0}), bm.ranked) << "trial " << t;
  }
}

TEST(Mmr, DuplicateTopDocumentDemoted) {
  // rel_norm = [1, 1, 0.9, 0, ...]; d0 and d1 share every token.
  // step 2: d1 scores 0.7*1 - 0.3*1 = 0.4, d2 scores 0.7*0.9 - 0 = 0.63.
  const RelevanceScores rel{10, 10, 9, 0, 0, 0, 0, 0};
  std::vector<TokenSet> sets{{"a", "b"}, {"a", "b"}, {"c", "d"}, {"e"}, {"f"}, {"g"}, {"h"}, {"i"}};
  EXPECT_EQ(mmr_rank(rel, sets, MmrConfig{0.7}), (RankedIndices{0, 2, 1, 3, 4, 5, 6, 7}));
  EXPECT_EQ(order_by_score(rel), (RankedIndices{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(Mmr, DuplicateKeptWhenRunnerUpIsWeak) {
  // d2 at rel_norm 0.4: 0.7*0.4 = 0.28 < 0.4, so the duplicate still comes second.
  const RelevanceScores rel{10, 10, 4, 0, 0, 0, 0, 0};
  std::vector<TokenSet> sets{{"a", "b"}, {"a", "b"}, {"c", "d"}, {"e"}, {"f"}, {"g"}, {"h"}, {"i"}};
  EXPECT_EQ(mmr_rank(rel, sets, MmrConfig{0.7})[1], 1);
}

TEST(Mmr, DisjointTokenSetsFollowRelevanceForAnyLambda) {
  std::mt19937_64 rng(2);
  std::vector<TokenSet> sets;
  for (int d = 0; d < 8; ++d) sets.push_back({"only" + std::to_string(d), "also" + std::to_string(d)});
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int t = 0; t < 50; ++t) {
    RelevanceScores rel{};
    for (auto& r : rel) r = u(rng);
    for (double lam : {0.0, 0.3, 0.7, 1.0}) {
      const auto got = mmr_rank(rel, sets, MmrConfig{lam});
      if (lam == 0.0) {
        // With no relevance weight every later score is 0; only the first pick uses relevance.
        EXPECT_EQ(got[0], order_by_score(rel)[0]);
      } else {
        EXPECT_EQ(got, order_by_score(rel)) << "lambda " << lam;
      }
    }
  }
}

TEST(Mmr, ConstantRelevanceAndBadLambda) {
  const RelevanceScores flat{2, 2, 2, 2, 2, 2, 2, 2};
  std::vector<TokenSet> sets(8);
  EXPECT_EQ(mmr_rank(flat, sets), (RankedIndices{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_THROW((void)mmr_rank(flat, sets, MmrConfig{1.5}), ConfigError);
  EXPECT_THROW((void)mmr_rank(flat, sets, MmrConfig{-0.1}), ConfigError);
}

TEST(Random, DeterministicPermutation) {
  const auto a = random_rank("cluster-1", 23);
  EXPECT_EQ(a, random_rank("cluster-1", 23));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (RankedIndices{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_NE(a, random_rank("cluster-1", 24));
}

TEST(Random, Top3JaccardMatchesHypergeometricExpectation) {
  double sum = 0.0;
  const int n = 4000;
  for (int c = 0; c < n; ++c) {
    const auto r = random_rank("c" + std::to_string(c), 99);
    int hits = 0;
    for (int i = 0; i < 3; ++i) hits += r[i] < 3 ? 1 : 0;
    sum += hits / (6.0 - hits);
  }
  EXPECT_NEAR(sum / n, 14.5 / 56.0, 0.015);
}

TEST(RankerIdParse, KnownAndUnknown) {
  EXPECT_EQ(RankerId::parse("bm25").kind, RankerId::Kind::bm25);
  const auto llm = RankerId::parse("llm:qwen-7b");
  EXPECT_EQ(llm.kind, RankerId::Kind::llm);
  EXPECT_EQ(llm.model, "qwen-7b");
  EXPECT_EQ(llm.str(), "llm:qwen-7b");
  EXPECT_TRUE(RankerId::parse("replay:m").is_model());
  EXPECT_THROW(RankerId::parse("llm:"), ConfigError);
  EXPECT_THROW(RankerId::parse("bm26"), ConfigError);
}

TEST(RankingInvariants, RejectsNonPermutations) {
  EXPECT_THROW(Ranking("c", RankerId{}, RankedIndices{0, 0, 1, 2, 3, 4, 5, 6}), InvalidRanking);
  EXPECT_THROW(Ranking("c", RankerId{}, RankedIndices{0, 1, 2, 3, 4, 5, 6, 8}), InvalidRanking);
  EXPECT_THROW(Ranking("c", RankerId{}, RankedIndices{0, 1, 2, 3, 4, 5, 6, 7}, true), InvalidRanking);
}

TEST(Prompt, ContainsFixedLinesAndDocumentsInPresentationOrder) {
  std::vector<std::string> docs;
  for (int i = 0; i < 8; ++i) docs.push_back("doc text " + std::to_string(i));
  const auto pool = pt::make_pool("c", docs, {3, 0, 7, 1, 6, 2, 5, 4}, "Where did the fire start?");
  const auto prompt = build_prompt(pool);
  EXPECT_NE(prompt.find("\nRank ALL 8 documents from best to worst.\n"), std::string::npos);
  EXPECT_EQ(prompt.rfind("You are ranking evidence documents for a query.\n", 0), 0u);
  EXPECT_NE(prompt.find("Return ONLY strict JSON with exactly 8 unique indices:{\"ranked_indices\":[...]}\n"),
            std::string::npos);
  EXPECT_NE(prompt.find("Query: Where did the fire start?\n"), std::string::npos);
  EXPECT_NE(prompt.find("[0] doc text 3\n[1] doc text 0\n[2] doc text 7\n"), std::string::npos);
  EXPECT_EQ(prompt, build_prompt(pool));
}

TEST(Prompt, OnlyDocumentLinesDependOnOrder) {
  std::vector<std::string> docs;
  for (int i = 0; i < 8; ++i) docs.push_back("body " + std::to_string(i));
  const auto a = build_prompt(pt::make_pool("c", docs, {0, 1, 2, 3, 4, 5, 6, 7}));
  const auto b = build_prompt(pt::make_pool("c", docs, {7, 6, 5, 4, 3, 2, 1, 0}));
  EXPECT_NE(a, b);
  const auto head = a.substr(0, a.find("Documents:\n"));
  EXPECT_EQ(head, b.substr(0, b.find("Documents:\n")));
  EXPECT_EQ(a.size(), b.size());
}

TEST(ParseResponse, AcceptsExactFormatAndWrappers) {
  EXPECT_EQ(*parse_ranking_response(R"({"ranked_indices":[3,1,0,2,4,7,6,5]})").positions,
            (RankedIndices{3, 1, 0, 2, 4, 7, 6, 5}));
  EXPECT_EQ(*parse_ranking_response("```json\n{\"ranked_indices\":[0,1,2,3,4,5,6,7]}\n```").positions,
            (RankedIndices{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(*parse_ranking_response(
                 "Sure! Here is my ranking: {\"note\": \"x}\"} then {\"ranked_indices\": [7,6,5,4,3,2,1,0]} done")
                 .positions,
            (RankedIndices{7, 6, 5, 4, 3, 2, 1, 0}));
  EXPECT_TRUE(parse_ranking_response(R"({"result":{"ranked_indices":[0,1,2,3,4,5,6,7]}})").ok());
}

TEST(ParseResponse, RejectsInvalidArrays) {
  for (const char* bad : {R"({"ranked_indices":[0,0,1,2,3,4,5,6]})",
                          R"({"ranked_indices":[0,1,2,3,4,5,6,8]})",
                          R"({"ranked_indices":[0,1,2,3,4,5,6]})",
                          R"({"ranked_indices":[0,1,2,3,4,5,6,7,0]})",
                          R"({"ranked_indices":[0,1,2,3,4,5,6,-1]})",
                          R"({"ranked_indices":[0,1,2,3,4,5,6,"7"]})",
                          R"({"ranked_indices":[0,1,2,3,4,5,6,7.5]})",
                          R"({"ranked_indices":"01234567"})",
                          R"({"ranked_indices":[0,1,2,3)",
                          "I cannot rank these documents.", ""}) {
    const auto out = parse_ranking_response(bad);
    EXPECT_FALSE(out.ok()) << bad;
    EXPECT_FALSE(out.failure.empty()) << bad;
  }
}

TEST(LlmMapping, PositionsMapThroughPresentationOrder) {
  const PresentationOrder order{5, 2, 7, 0, 3, 1, 6, 4};
  EXPECT_EQ(positions_to_pool_indices({2, 0, 1, 3, 4, 5, 6, 7}, order),
            (RankedIndices{7, 5, 2, 0, 3, 1, 6, 4}));
  std::vector<std::string> docs(8, "d");
  const auto pool = pt::make_pool("c9", docs, order);
  const auto r = ranking_from_response(pool, RankerId::parse("replay:m"),
                                       R"({"ranked_indices":[2,0,1,3,4,5,6,7]})");
  EXPECT_FALSE(r.fallback_used());
  EXPECT_EQ(r.ranked_indices(), (RankedIndices{7, 5, 2, 0, 3, 1, 6, 4}));
  ASSERT_TRUE(r.raw_response());
}

TEST(LlmMapping, MalformedResponseFallsBackToPresentationOrder) {
  const PresentationOrder order{5, 2, 7, 0, 3, 1, 6, 4};
  const auto pool = pt::make_pool("c9", std::vector<std::string>(8, "d"), order);
  const auto r = ranking_from_response(pool, RankerId::parse("replay:m"), "no idea");
  EXPECT_TRUE(r.fallback_used());
  EXPECT_EQ(r.ranked_indices(), (RankedIndices{5, 2, 7, 0, 3, 1, 6, 4}));
  EXPECT_EQ(*r.raw_response(), "no idea");
}

TEST(Fixtures, StoreLoadAndMissing) {
  pt::TempDir dir;
  FixtureStore store(dir.path());
  EXPECT_FALSE(store.contains("m", "c1"));
  store.store("m", "c1", "raw\nbytes {}");
  EXPECT_TRUE(store.contains("m", "c1"));
  EXPECT_EQ(store.load("m", "c1"), "raw\nbytes {}");
  EXPECT_FALSE(std::filesystem::exists(dir / "m" / "c1.tmp"));
  try {
    (void)store.load("m", "c2");
    FAIL();
  } catch (const MissingFixture& e) {
    EXPECT_NE(std::string(e.what()).find("c2"), std::string::npos);
  }
  EXPECT_THROW((void)store.path_for("m", "../x"), Error);
}

TEST(Replay, TwiceGivesIdenticalRankingsFile) {
  pt::TempDir dir;
  FixtureStore store(dir / "fx");
  std::vector<EvidencePool> pools;
  for (int c = 0; c < 5; ++c) {
    const auto id = "c" + std::to_string(c);
    pools.push_back(pt::make_pool(id, std::vector<std::string>(8, "doc " + id), presentation_order_for(1, id)));
    store.store("m", id, R"({"ranked_indices":[1,0,2,3,4,5,6,7]})");
  }
  RankOptions opt;
  opt.rankers = {RankerId::parse("replay:m")};
  opt.fixtures_dir = dir / "fx";
  const auto a = rank_pools(pools, pt::tokenizer(), opt, nullptr);
  const auto b = rank_pools(pools, pt::tokenizer(), opt, nullptr);
  save_rankings(a.rankings, dir / "a.jsonl");
  save_rankings(b.rankings, dir / "b.jsonl");
  EXPECT_EQ(pt::read_file(dir / "a.jsonl"), pt::read_file(dir / "b.jsonl"));
  EXPECT_EQ(a.fallbacks, 0u);
  EXPECT_EQ(load_rankings(dir / "a.jsonl"), a.rankings);
}

TEST(Replay, MissingFixtureNamesCluster) {
  pt::TempDir dir;
  FixtureStore store(dir.path());
  const auto pool = pt::make_pool("lonely", std::vector<std::string>(8, "d"));
  EXPECT_THROW((void)replay_rank(store, "m", pool), MissingFixture);
  RankOptions opt;
  opt.rankers = {RankerId::parse("replay:m")};
  opt.fixtures_dir = dir.path();
  try {
    (void)rank_pools({pool}, pt::tokenizer(), opt, nullptr);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos) << e.what();
  }
}

TEST(RankPools, OrderAndBaselines) {
  std::vector<EvidencePool> pools;
  for (int c = 0; c < 3; ++c) {
    std::vector<std::string> docs;
    for (int d = 0; d < 8; ++d) docs.push_back("fire crews canyon " + std::to_string(c * d) + " word" + std::to_string(d));
    pools.push_back(pt::make_pool("p" + std::to_string(c), docs));
  }
  RankOptions opt;
  opt.rankers = {RankerId::parse("bm25"), RankerId::parse("mmr"), RankerId::parse("random")};
  opt.random_seed = 23;
  const auto res = rank_pools(pools, pt::tokenizer(), opt, nullptr);
  ASSERT_EQ(res.rankings.size(), 9u);
  EXPECT_EQ(res.rankings[0].cluster_id(), "p0");
  EXPECT_EQ(res.rankings[1].ranker().str(), "mmr");
  EXPECT_EQ(res.rankings[5].ranker().str(), "random");
  EXPECT_EQ(res.rankings[5].ranked_indices(), random_rank("p1", 23));

  opt.rankers = {RankerId::parse("llm:m")};
  EXPECT_THROW((void)rank_pools(pools, pt::tokenizer(), opt, nullptr), StageError);
}
