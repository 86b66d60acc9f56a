#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "poolrank/corpus.hpp"
#include "poolrank/textproc.hpp"

namespace poolrank {

class GatewayClient;

/// Ranker identifier: bm25, mmr, random, llm:<model> or replay:<model>.
struct RankerId {
  enum class Kind { bm25, mmr, random, llm, replay };

  Kind kind = Kind::bm25;
  std::string model;  // llm / replay only

  /// Throws ConfigError on an unknown ranker string.
  static RankerId parse(std::string_view text);
  [[nodiscard]] std::string str() const;
  [[nodiscard]] bool is_model() const noexcept { return kind == Kind::llm || kind == Kind::replay; }

  friend bool operator==(const RankerId&, const RankerId&) = default;
};

using RankedIndices = std::array<int, kPoolSize>;

/// Whether `v` is a permutation of {0..7}.
[[nodiscard]] bool is_permutation_of_pool(std::span<const int> v) noexcept;

/// Strict total order over pool indices. Invariants are checked on construction.
class Ranking {
 public:
  /// Throws InvalidRanking.
  Ranking(std::string cluster_id, RankerId ranker, RankedIndices ranked,
          bool fallback_used = false, std::optional<std::string> raw_response = std::nullopt);

  [[nodiscard]] const std::string& cluster_id() const noexcept { return cluster_id_; }
  [[nodiscard]] const RankerId& ranker() const noexcept { return ranker_; }
  [[nodiscard]] const RankedIndices& ranked_indices() const noexcept { return ranked_; }
  [[nodiscard]] bool fallback_used() const noexcept { return fallback_used_; }
  [[nodiscard]] const std::optional<std::string>& raw_response() const noexcept {
    return raw_response_;
  }

  friend bool operator==(const Ranking&, const Ranking&) = default;

 private:
  std::string cluster_id_;
  RankerId ranker_;
  RankedIndices ranked_;
  bool fallback_used_;
  std::optional<std::string> raw_response_;
};

using RelevanceScores = std::array<double, kPoolSize>;

struct Bm25Params {
  double k1 = 1.5;
  double b = 0.75;
  double epsilon = 0.25;
};

/// Okapi BM25 over an arbitrary document collection, with negative IDF
/// replaced by epsilon * mean IDF. Each query term contributes once per
/// occurrence in `query_terms`.
[[nodiscard]] std::vector<double> bm25_scores(std::span<const std::string> query_terms,
                                              std::span<const std::vector<std::string>> docs,
                                              const Bm25Params& params = {});

/// Indices sorted by descending score; ties by ascending index.
[[nodiscard]] RankedIndices order_by_score(const RelevanceScores& scores);

struct Bm25Result {
  RankedIndices ranked;
  RelevanceScores scores;
};

/// Scores the 8 pool documents (term lists keep duplicates) against the query tokens.
[[nodiscard]] Bm25Result bm25_rank(const TokenSet& query_tokens,
                                   std::span<const std::vector<std::string>> doc_terms,
                                   const Bm25Params& params = {});

struct MmrConfig {
  double lambda = 0.7;
};

/// Greedy MMR over min-max normalised relevance and content-token Jaccard.
/// Throws ConfigError if lambda lies outside [0, 1].
[[nodiscard]] RankedIndices mmr_rank(const RelevanceScores& relevance,
                                     std::span<const TokenSet> doc_tokens,
                                     const MmrConfig& config = {});

[[nodiscard]] RankedIndices random_rank(const std::string& cluster_id, std::uint64_t seed);

/// Prompt text for the listwise LLM ranker; documents appear in presentation order.
[[nodiscard]] std::string build_prompt(const EvidencePool& pool);

struct ParseOutcome {
  std::optional<RankedIndices> positions;  // presentation positions, best first
  std::string failure;                     // reason when positions is empty

  [[nodiscard]] bool ok() const noexcept { return positions.has_value(); }
};

[[nodiscard]] ParseOutcome parse_ranking_response(std::string_view text);

/// Maps presentation positions back to pool indices.
[[nodiscard]] RankedIndices positions_to_pool_indices(const RankedIndices& positions,
                                                      const PresentationOrder& order);

/// Shared tail of llm_rank and replay_rank: parse, map back, or fall back to
/// the presentation order.
[[nodiscard]] Ranking ranking_from_response(const EvidencePool& pool, const RankerId& ranker,
                                            std::string raw);

/// Recorded completions stored as <root>/<model>/<cluster_id>.
class FixtureStore {
 public:
  explicit FixtureStore(std::filesystem::path root) : root_(std::move(root)) {}

  [[nodiscard]] std::filesystem::path path_for(const std::string& model,
                                               const std::string& cluster_id) const;
  [[nodiscard]] bool contains(const std::string& model, const std::string& cluster_id) const;
  /// Throws MissingFixture.
  [[nodiscard]] std::string load(const std::string& model, const std::string& cluster_id) const;
  /// Atomic write (temp file + rename).
  void store(const std::string& model, const std::string& cluster_id,
             const std::string& raw) const;

  [[nodiscard]] const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
};

/// Requests a completion from the gateway (temperature 0), persists it to
/// `fixtures` if given, then parses. Gateway errors propagate.
[[nodiscard]] Ranking llm_rank(GatewayClient& client, const std::string& model,
                               const EvidencePool& pool, const FixtureStore* fixtures);

/// Throws MissingFixture.
[[nodiscard]] Ranking replay_rank(const FixtureStore& fixtures, const std::string& model,
                                  const EvidencePool& pool);

[[nodiscard]] nlohmann::json ranking_to_json(const Ranking& r);
/// Throws SchemaError / InvalidRanking.
[[nodiscard]] Ranking ranking_from_json(const nlohmann::json& j);
void save_rankings(const std::vector<Ranking>& rankings, const std::filesystem::path& path);
[[nodiscard]] std::vector<Ranking> load_rankings(const std::filesystem::path& path);

/// Pool-level convenience: tokenizes the pool and runs one non-LLM ranker.
struct PoolFeatures {
  TokenSet query_tokens;
  TokenSet summary_tokens;
  std::vector<std::vector<std::string>> doc_terms;
  std::vector<TokenSet> doc_tokens;

  static PoolFeatures extract(const EvidencePool& pool, const Tokenizer& tokenizer);
};

struct RankOptions {
  std::vector<RankerId> rankers;
  double lambda = 0.7;
  std::uint64_t random_seed = 0;
  std::optional<std::filesystem::path> fixtures_dir;
  std::size_t max_inflight = 4;
  int max_retries = 5;
  int backoff_initial_ms = 200;
};

struct RankStageResult {
  std::vector<Ranking> rankings;  // sorted by (cluster_id, ranker order)
  std::size_t fallbacks = 0;
};

/// Runs every configured ranker over every pool. `client` may be null when
/// no llm: ranker is configured. Throws StageError naming the cluster.
[[nodiscard]] RankStageResult rank_pools(const std::vector<EvidencePool>& pools,
                                         const Tokenizer& tokenizer, const RankOptions& options,
                                         GatewayClient* client);

}  // namespace poolrank
