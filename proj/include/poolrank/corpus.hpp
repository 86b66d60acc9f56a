#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace poolrank {

inline constexpr int kPoolSize = 8;
inline constexpr std::string_view kSourceSeparator = "|||||";

struct ClusterRecord {
  std::string cluster_id;
  std::vector<std::string> sources;  // trimmed, nonempty, dataset order
  std::string summary;
};

struct Document {
  int index = 0;
  std::string text;

  friend bool operator==(const Document&, const Document&) = default;
};

/// Pool index shown at each presentation position.
using PresentationOrder = std::array<int, kPoolSize>;

struct EvidencePool {
  std::string cluster_id;
  std::string query;
  std::vector<Document> documents;
  std::string summary;
  PresentationOrder presentation_order{};

  /// Throws SchemaError describing the first violated invariant.
  void validate() const;

  friend bool operator==(const EvidencePool&, const EvidencePool&) = default;
};

struct PoolParams {
  std::size_t min_sources = 8;
  std::size_t snippet_chars = 600;
  std::size_t query_chars = 400;
  std::uint64_t sample_seed = 0;
  std::uint64_t shuffle_seed = 0;
};

/// Parses one dataset record. `fallback_id` is used when the record carries
/// neither `cluster_id` nor `id`. `sources` may be a list or a single string
/// joined by kSourceSeparator; `document` is accepted as an alias.
/// Throws MalformedRecord.
[[nodiscard]] ClusterRecord parse_cluster(const nlohmann::json& raw,
                                          const std::string& fallback_id);

/// nullopt means the cluster was skipped (fewer than min_sources usable sources).
/// Throws EmptySummary.
[[nodiscard]] std::optional<EvidencePool> build_pool(const ClusterRecord& cluster,
                                                     const PoolParams& params);

/// Indices (into cluster.sources) chosen by the seeded sampler, ascending.
[[nodiscard]] std::vector<std::size_t> sample_sources(std::size_t available, std::size_t take,
                                                      std::uint64_t sample_seed,
                                                      const std::string& cluster_id);

[[nodiscard]] PresentationOrder presentation_order_for(std::uint64_t shuffle_seed,
                                                       const std::string& cluster_id);

/// Reads line-delimited records from each file in turn (split merge is a
/// concatenation); record ids default to the index in the merged stream.
[[nodiscard]] std::vector<ClusterRecord> read_dataset(
    const std::vector<std::filesystem::path>& inputs);

struct PoolBuildResult {
  std::vector<EvidencePool> pools;  // sorted by cluster_id
  std::size_t skipped = 0;
};

[[nodiscard]] PoolBuildResult build_pools(const std::vector<ClusterRecord>& clusters,
                                          const PoolParams& params);

[[nodiscard]] nlohmann::json pool_to_json(const EvidencePool& pool);
/// Throws SchemaError.
[[nodiscard]] EvidencePool pool_from_json(const nlohmann::json& j);

void save_pools(const std::vector<EvidencePool>& pools, const std::filesystem::path& path);
/// Throws IoError or SchemaError (message names the 1-based line).
[[nodiscard]] std::vector<EvidencePool> load_pools(const std::filesystem::path& path);

}  // namespace poolrank
