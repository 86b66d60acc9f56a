#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "poolrank/metrics.hpp"
#include "poolrank/stats.hpp"

namespace poolrank {

/// One row of the model-vs-baseline agreement table: mean Kendall tau
/// against bm25/mmr and mean top-k Jaccard against bm25/mmr/random.
struct AgreementTableRow {
  std::string model;
  std::string model_ranker;
  double tau_bm25 = 0.0;
  double tau_mmr = 0.0;
  double jaccard_bm25 = 0.0;
  double jaccard_mmr = 0.0;
  double jaccard_random = 0.0;
  std::size_t clusters = 0;
};

/// Throws MissingAgreement when a (model, baseline) pair at `k` is absent
/// for some cluster.
[[nodiscard]] std::vector<AgreementTableRow> agreement_table(
    const std::vector<AgreementRow>& agreement, const std::vector<std::string>& model_rankers,
    int k = 3);

/// Writes `<stem>.tsv` and `<stem>.md`.
void emit_agreement_table(const std::vector<AgreementTableRow>& rows, int k,
                          const std::filesystem::path& stem);

/// Table grouped by model then metric, with the three comparison columns per
/// k in `ks`. Throws MissingComparisons if any cell is absent.
void emit_delta_table(const std::vector<DeltaRow>& deltas, const std::vector<int>& ks,
                      const std::filesystem::path& stem);

inline constexpr std::array<std::string_view, 4> kCurveMetrics = {
    "redundancy", "coverage", "sem_redundancy", "sem_coverage"};

/// JSON figure data: per metric and model, (k, delta, ci) points of the
/// MMR-minus-LLM comparison for every k in `ks`. Throws MissingComparisons.
void emit_curve_data(const std::vector<DeltaRow>& deltas, const std::vector<int>& ks,
                     const std::filesystem::path& path);

/// "+.091 [.077,.106]" style rendering used in the markdown tables.
[[nodiscard]] std::string format_delta_cell(const BootstrapDelta& d);

// Schema checks for emitted files; throw SchemaError with the reason.
void validate_agreement_table(const std::filesystem::path& tsv, std::size_t expected_models);
void validate_delta_table(const std::filesystem::path& tsv, const std::vector<int>& ks,
                          std::size_t expected_models);
void validate_curve_data(const std::filesystem::path& json, const std::vector<int>& ks,
                         std::size_t expected_models);

}  // namespace poolrank
