#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "poolrank/metrics.hpp"

namespace poolrank {

struct PairedSample {
  std::string cluster_id;
  double value_a = 0.0;
  double value_b = 0.0;
};

struct BootstrapDelta {
  double mean_delta = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int resamples = 0;
  double ci_level = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const BootstrapDelta&, const BootstrapDelta&) = default;
};

/// Linear interpolation between order statistics of an ascending sample
/// (position (n-1)*q).
[[nodiscard]] double percentile_sorted(std::span<const double> sorted, double q);

/// Percentile paired bootstrap of mean(value_a - value_b) over clusters.
/// Each resample draws whole clusters with replacement from CounterRng(seed).
/// Throws TooFewSamples (fewer than 2) and ConfigError on bad arguments.
[[nodiscard]] BootstrapDelta paired_bootstrap(std::span<const PairedSample> samples,
                                              int resamples, double ci_level, std::uint64_t seed);

/// Same, over already-formed per-cluster deltas.
[[nodiscard]] BootstrapDelta bootstrap_mean(std::span<const double> deltas, int resamples,
                                            double ci_level, std::uint64_t seed);

/// Orientation of a comparison; the left operand is the "first method".
enum class Comparison { mmr_minus_llm, bm25_minus_llm, llm_minus_random };

inline constexpr std::array<Comparison, 3> kComparisons = {
    Comparison::mmr_minus_llm, Comparison::bm25_minus_llm, Comparison::llm_minus_random};

[[nodiscard]] std::string_view comparison_name(Comparison c) noexcept;
/// Throws ConfigError.
[[nodiscard]] Comparison parse_comparison(std::string_view name);

struct PlanRow {
  std::string model_ranker;  // e.g. replay:llama
  std::string metric;
  Comparison comparison = Comparison::mmr_minus_llm;
  int k = 0;
};

struct DeltaRow {
  std::string model;  // model name without the llm:/replay: prefix
  std::string model_ranker;
  std::string metric;
  Comparison comparison = Comparison::mmr_minus_llm;
  int k = 0;
  std::size_t clusters = 0;
  BootstrapDelta delta;
};

/// Every model ranker x metric x comparison x k, in that nesting order.
[[nodiscard]] std::vector<PlanRow> default_plan(const std::vector<std::string>& model_rankers,
                                                const std::vector<int>& ks);

struct BootstrapOptions {
  int resamples = 10000;
  double ci_level = 0.95;
  std::uint64_t seed = 0;
};

/// Per-row seed keyed by (seed, comparison identifier), so rows are
/// independent of each other and of plan order.
[[nodiscard]] std::uint64_t row_seed(std::uint64_t seed, const PlanRow& row);

/// Throws MissingMetrics naming the absent (ranker, k) or cluster.
[[nodiscard]] std::vector<DeltaRow> build_comparisons(const std::vector<MetricsRow>& metrics,
                                                      const std::vector<PlanRow>& plan,
                                                      const BootstrapOptions& options);

[[nodiscard]] nlohmann::json delta_row_to_json(const DeltaRow& row);
[[nodiscard]] DeltaRow delta_row_from_json(const nlohmann::json& j);
void save_deltas(const std::vector<DeltaRow>& rows, const std::filesystem::path& path);
[[nodiscard]] std::vector<DeltaRow> load_deltas(const std::filesystem::path& path);

}  // namespace poolrank
