#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poolrank/corpus.hpp"
#include "poolrank/rankers.hpp"

namespace poolrank {

inline constexpr std::string_view kToolVersion = "0.3.0";

struct RunConfig {
  std::vector<std::filesystem::path> dataset;
  std::filesystem::path stopwords;
  PoolParams pool;
  std::uint64_t random_seed = 0;
  std::uint64_t bootstrap_seed = 0;
  std::vector<std::string> rankers;
  double mmr_lambda = 0.7;
  std::optional<std::string> gateway_url;
  std::optional<std::filesystem::path> fixtures;
  std::size_t max_inflight = 4;
  std::string embedding_model = "sentence-transformers/all-MiniLM-L6-v2";
  std::filesystem::path embedding_cache;
  std::size_t embedding_batch = 32;
  std::vector<int> k_values{3, 4, 5, 6};
  std::vector<int> table_k{3, 5};
  int agreement_k = 3;
  int resamples = 10000;
  double ci_level = 0.95;
  bool offline = false;
  std::filesystem::path output_root = "runs";

  /// Relative paths resolve against `base_dir`. Throws ConfigError.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  /// Fields that determine outputs, with paths as given. Used for the run
  /// directory name and the manifest snapshot.
  [[nodiscard]] nlohmann::json snapshot() const;
  [[nodiscard]] std::string config_hash() const;

  /// Throws ConfigError on the first violated constraint.
  void validate() const;

  [[nodiscard]] std::vector<std::string> model_rankers() const;

  /// Directory relative paths were resolved against.
  [[nodiscard]] const std::filesystem::path& base_dir() const noexcept { return base_dir_; }

 private:
  std::filesystem::path base_dir_;
};

enum class Stage { pools, rank, score, compare, report };

inline constexpr std::array<Stage, 5> kStages = {Stage::pools, Stage::rank, Stage::score,
                                                 Stage::compare, Stage::report};

[[nodiscard]] std::string_view stage_name(Stage s) noexcept;

/// Fixed file layout of a run directory.
struct RunLayout {
  std::filesystem::path root;

  [[nodiscard]] std::filesystem::path pools() const { return root / "pools.jsonl"; }
  [[nodiscard]] std::filesystem::path rankings() const { return root / "rankings.jsonl"; }
  [[nodiscard]] std::filesystem::path metrics() const { return root / "metrics.jsonl"; }
  [[nodiscard]] std::filesystem::path agreement() const { return root / "agreement.jsonl"; }
  [[nodiscard]] std::filesystem::path deltas() const { return root / "deltas.jsonl"; }
  [[nodiscard]] std::filesystem::path report_dir() const { return root / "report"; }
  [[nodiscard]] std::filesystem::path stage_record(Stage s) const;
  [[nodiscard]] std::filesystem::path manifest() const { return root / "manifest.json"; }
  [[nodiscard]] std::filesystem::path lock() const { return root / ".lock"; }
};

struct RunOptions {
  std::optional<std::filesystem::path> run_dir;
  /// Only these stages run (in pipeline order); empty means all.
  std::vector<Stage> stages;
  bool force = false;  // ignore stage records and recompute
};

struct StageOutcome {
  Stage stage;
  bool skipped = false;
};

struct RunResult {
  std::filesystem::path run_dir;
  std::vector<StageOutcome> stages;
};

[[nodiscard]] std::filesystem::path default_run_dir(const RunConfig& config);

/// Executes the pipeline, skipping any stage whose recorded inputs and
/// outputs still hash the same, and writes manifest.json last.
/// Throws StageError.
RunResult run(const RunConfig& config, const RunOptions& options = {});

}  // namespace poolrank
