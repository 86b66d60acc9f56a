#include "poolrank/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "poolrank/error.hpp"
#include "poolrank/hashing.hpp"
#include "poolrank/textproc.hpp"

namespace poolrank {

using nlohmann::json;

namespace {

std::vector<std::string> split_on(std::string_view text, std::string_view sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      break;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + sep.size();
  }
  return parts;
}

bool is_permutation(const PresentationOrder& order) {
  std::array<bool, kPoolSize> seen{};
  for (const int v : order) {
    if (v < 0 || v >= kPoolSize || seen[static_cast<std::size_t>(v)]) return false;
    seen[static_cast<std::size_t>(v)] = true;
  }
  return true;
}

}  // namespace

void EvidencePool::validate() const {
  if (cluster_id.empty()) throw SchemaError("pool has empty cluster_id");
  if (trim(query).empty()) throw SchemaError("pool " + cluster_id + ": query is empty");
  if (documents.size() != kPoolSize)
    throw SchemaError("pool " + cluster_id + ": expected 8 documents, found " +
                      std::to_string(documents.size()));
  for (std::size_t i = 0; i < documents.size(); ++i) {
    if (documents[i].index != static_cast<int>(i))
      throw SchemaError("pool " + cluster_id + ": document " + std::to_string(i) +
                        " has index " + std::to_string(documents[i].index));
    if (trim(documents[i].text).empty())
      throw SchemaError("pool " + cluster_id + ": document " + std::to_string(i) + " is empty");
  }
  if (!is_permutation(presentation_order))
    throw SchemaError("pool " + cluster_id + ": presentation_order is not a permutation of 0..7");
}

ClusterRecord parse_cluster(const json& raw, const std::string& fallback_id) {
  if (!raw.is_object()) throw MalformedRecord("record is not a JSON object");
  if (!raw.contains("summary") || !raw["summary"].is_string())
    throw MalformedRecord("record missing string field 'summary'");

  const json* src = nullptr;
  if (raw.contains("sources")) {
    src = &raw["sources"];
  } else if (raw.contains("document")) {
    src = &raw["document"];
  } else {
    throw MalformedRecord("record missing field 'sources'");
  }

  std::vector<std::string> pieces;
  if (src->is_string()) {
    pieces = split_on(src->get_ref<const std::string&>(), kSourceSeparator);
  } else if (src->is_array()) {
    for (const auto& s : *src) {
      if (!s.is_string()) throw MalformedRecord("non-string entry in 'sources'");
      pieces.push_back(s.get<std::string>());
    }
  } else {
    throw MalformedRecord("'sources' must be a string or a list of strings");
  }

  ClusterRecord rec;
  if (raw.contains("cluster_id") && raw["cluster_id"].is_string()) {
    rec.cluster_id = raw["cluster_id"].get<std::string>();
  } else if (raw.contains("id") && raw["id"].is_string()) {
    rec.cluster_id = raw["id"].get<std::string>();
  } else if (raw.contains("id") && raw["id"].is_number_integer()) {
    rec.cluster_id = std::to_string(raw["id"].get<long long>());
  } else {
    rec.cluster_id = fallback_id;
  }
  rec.summary = raw["summary"].get<std::string>();
  for (auto& p : pieces) {
    auto t = trim(p);
    if (!t.empty()) rec.sources.push_back(std::move(t));
  }
  return rec;
}

std::vector<std::size_t> sample_sources(std::size_t available, std::size_t take,
                                        std::uint64_t sample_seed,
                                        const std::string& cluster_id) {
  const auto perm = seeded_permutation(static_cast<int>(available), hash64(sample_seed, cluster_id));
  std::vector<std::size_t> chosen(perm.begin(),
                                  perm.begin() + static_cast<std::ptrdiff_t>(std::min(take, available)));
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

PresentationOrder presentation_order_for(std::uint64_t shuffle_seed,
                                         const std::string& cluster_id) {
  // Distinct stream from source sampling even when the two seeds coincide.
  const auto perm = seeded_permutation(kPoolSize, hash64(mix64(shuffle_seed) ^ 0x70726573ULL, cluster_id));
  PresentationOrder order{};
  std::copy(perm.begin(), perm.end(), order.begin());
  return order;
}

std::optional<EvidencePool> build_pool(const ClusterRecord& cluster, const PoolParams& params) {
  const std::size_t need = std::max<std::size_t>(params.min_sources, kPoolSize);
  if (cluster.sources.size() < need) return std::nullopt;

  const auto sentences = split_sentences(cluster.summary);
  if (sentences.empty()) throw EmptySummary("cluster " + cluster.cluster_id + ": summary has no sentence");

  EvidencePool pool;
  pool.cluster_id = cluster.cluster_id;
  pool.query = truncate_chars(sentences.front(), params.query_chars);
  pool.summary = cluster.summary;
  const auto chosen = sample_sources(cluster.sources.size(), kPoolSize, params.sample_seed,
                                     cluster.cluster_id);
  pool.documents.reserve(kPoolSize);
  for (std::size_t i = 0; i < chosen.size(); ++i)
    pool.documents.push_back(Document{static_cast<int>(i),
                                      truncate_chars(cluster.sources[chosen[i]], params.snippet_chars)});
  pool.presentation_order = presentation_order_for(params.shuffle_seed, cluster.cluster_id);
  pool.validate();
  return pool;
}

std::vector<ClusterRecord> read_dataset(const std::vector<std::filesystem::path>& inputs) {
  std::vector<ClusterRecord> out;
  std::size_t index = 0;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      json raw;
      try {
        raw = json::parse(line);
      } catch (const json::parse_error& e) {
        throw MalformedRecord(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      try {
        out.push_back(parse_cluster(raw, std::to_string(index)));
      } catch (const MalformedRecord& e) {
        throw MalformedRecord(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      ++index;
    }
  }
  return out;
}

PoolBuildResult build_pools(const std::vector<ClusterRecord>& clusters, const PoolParams& params) {
  PoolBuildResult result;
  for (const auto& c : clusters) {
    if (auto pool = build_pool(c, params)) {
      result.pools.push_back(std::move(*pool));
    } else {
      ++result.skipped;
    }
  }
  std::stable_sort(result.pools.begin(), result.pools.end(),
                   [](const EvidencePool& a, const EvidencePool& b) { return a.cluster_id < b.cluster_id; });
  for (std::size_t i = 1; i < result.pools.size(); ++i)
    if (result.pools[i].cluster_id == result.pools[i - 1].cluster_id)
      throw SchemaError("duplicate cluster_id " + result.pools[i].cluster_id);
  return result;
}

json pool_to_json(const EvidencePool& pool) {
  json docs = json::array();
  for (const auto& d : pool.documents) docs.push_back({{"index", d.index}, {"text", d.text}});
  return json{{"cluster_id", pool.cluster_id},
              {"query", pool.query},
              {"documents", std::move(docs)},
              {"summary", pool.summary},
              {"presentation_order", pool.presentation_order}};
}

EvidencePool pool_from_json(const json& j) {
  try {
    EvidencePool pool;
    pool.cluster_id = j.at("cluster_id").get<std::string>();
    pool.query = j.at("query").get<std::string>();
    pool.summary = j.at("summary").get<std::string>();
    for (const auto& d : j.at("documents"))
      pool.documents.push_back(Document{d.at("index").get<int>(), d.at("text").get<std::string>()});
    const auto& order = j.at("presentation_order");
    if (!order.is_array() || order.size() != kPoolSize)
      throw SchemaError("presentation_order must list 8 positions");
    for (std::size_t i = 0; i < kPoolSize; ++i) pool.presentation_order[i] = order[i].get<int>();
    pool.validate();
    return pool;
  } catch (const json::exception& e) {
    throw SchemaError(e.what());
  }
}

void save_pools(const std::vector<EvidencePool>& pools, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : pools) out << pool_to_json(p).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<EvidencePool> load_pools(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<EvidencePool> pools;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      pools.push_back(pool_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw SchemaError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pools;
}

}  // namespace poolrank
