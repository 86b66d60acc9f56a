#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "poolrank/embeddings.hpp"
#include "poolrank/rankers.hpp"
#include "poolrank/textproc.hpp"

namespace poolrank {

/// Counts of zero-denominator conventions applied (each returns 0.0).
struct Diagnostics {
  std::size_t empty_query = 0;       // |Q| = 0 in coverage
  std::size_t empty_summary = 0;     // |R| = 0 in summary recall
  std::size_t empty_jaccard = 0;     // both sets empty in a redundancy pair

  Diagnostics& operator+=(const Diagnostics& o) noexcept {
    empty_query += o.empty_query;
    empty_summary += o.empty_summary;
    empty_jaccard += o.empty_jaccard;
    return *this;
  }
  friend bool operator==(const Diagnostics&, const Diagnostics&) = default;
};

/// Unordered top-k set of one ranking, stored ascending.
struct Selection {
  std::string cluster_id;
  RankerId ranker;
  int k = 0;
  std::vector<int> indices;
};

/// Throws BudgetOutOfRange unless 1 <= k <= 8.
[[nodiscard]] Selection select_top_k(const Ranking& r, int k);

[[nodiscard]] double coverage(std::span<const TokenSet> selected, const TokenSet& query,
                              Diagnostics* diag = nullptr);
/// Throws BudgetTooSmall for fewer than two sets.
[[nodiscard]] double redundancy(std::span<const TokenSet> selected, Diagnostics* diag = nullptr);
[[nodiscard]] double summary_recall(std::span<const TokenSet> selected, const TokenSet& summary,
                                    Diagnostics* diag = nullptr);
/// Throws BudgetTooSmall for fewer than two vectors.
[[nodiscard]] double sem_redundancy(std::span<const EmbeddingVector> selected);
/// Throws NoSummarySentences.
[[nodiscard]] double sem_coverage(std::span<const EmbeddingVector> sentences,
                                  std::span<const EmbeddingVector> selected);

[[nodiscard]] double kendall_tau(std::span<const int> a, std::span<const int> b);
[[nodiscard]] double kendall_tau(const Ranking& a, const Ranking& b);
[[nodiscard]] double topk_jaccard(const Ranking& a, const Ranking& b, int k);

/// Redundancy fields are empty for k = 1, where no pair exists.
struct SelectionMetrics {
  double coverage = 0.0;
  std::optional<double> redundancy;
  double summary_recall = 0.0;
  std::optional<double> sem_redundancy;
  double sem_coverage = 0.0;
};

inline constexpr std::array<std::string_view, 5> kMetricNames = {
    "coverage", "redundancy", "summary_recall", "sem_redundancy", "sem_coverage"};

/// Field lookup by metric name; nullopt when the field is absent.
/// Throws ConfigError on an unknown name.
[[nodiscard]] std::optional<double> metric_value(const SelectionMetrics& m,
                                                 std::string_view name);

struct MetricsRow {
  std::string cluster_id;
  std::string ranker_id;
  int k = 0;
  SelectionMetrics metrics;
};

struct AgreementRow {
  std::string cluster_id;
  std::string ranker_a;
  std::string ranker_b;
  int k = 0;
  double kendall_tau = 0.0;
  double topk_jaccard = 0.0;
};

/// Tokens and embeddings of one pool, computed once and shared by every
/// (ranker, k) scored against it.
struct PoolScoringInputs {
  PoolFeatures features;
  std::vector<EmbeddingVector> doc_embeddings;       // by pool index
  std::vector<EmbeddingVector> sentence_embeddings;  // summary sentences
};

[[nodiscard]] SelectionMetrics score_selection(const Selection& sel,
                                               const PoolScoringInputs& inputs,
                                               Diagnostics* diag = nullptr);

struct ScoreStageResult {
  std::vector<MetricsRow> metrics;      // (cluster, ranker order, k)
  std::vector<AgreementRow> agreement;  // (cluster, pair order, k)
  Diagnostics diagnostics;
};

/// Scores every ranking in `rankings` for each k and computes agreement for
/// every unordered pair of `ranker_order`. Embeddings come from `cache`,
/// with `provider` consulted on misses when not offline.
[[nodiscard]] ScoreStageResult score_pools(const std::vector<EvidencePool>& pools,
                                           const std::vector<Ranking>& rankings,
                                           const std::vector<std::string>& ranker_order,
                                           const std::vector<int>& ks, const Tokenizer& tokenizer,
                                           EmbeddingProvider* provider, EmbeddingCache& cache,
                                           const EmbedOptions& embed_options);

[[nodiscard]] nlohmann::json metrics_row_to_json(const MetricsRow& row);
[[nodiscard]] MetricsRow metrics_row_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json agreement_row_to_json(const AgreementRow& row);
[[nodiscard]] AgreementRow agreement_row_from_json(const nlohmann::json& j);

void save_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);
[[nodiscard]] std::vector<MetricsRow> load_metrics(const std::filesystem::path& path);
void save_agreement(const std::vector<AgreementRow>& rows, const std::filesystem::path& path);
[[nodiscard]] std::vector<AgreementRow> load_agreement(const std::filesystem::path& path);

}  // namespace poolrank
