#include "poolrank/rankers.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "poolrank/error.hpp"
#include "poolrank/gateway_client.hpp"
#include "poolrank/hashing.hpp"

namespace poolrank {

using nlohmann::json;

// ---------------------------------------------------------------- RankerId

RankerId RankerId::parse(std::string_view text) {
  if (text == "bm25") return {Kind::bm25, {}};
  if (text == "mmr") return {Kind::mmr, {}};
  if (text == "random") return {Kind::random, {}};
  for (const auto& [prefix, kind] :
       {std::pair{std::string_view("llm:"), Kind::llm}, std::pair{std::string_view("replay:"), Kind::replay}}) {
    if (text.substr(0, prefix.size()) == prefix) {
      auto model = std::string(text.substr(prefix.size()));
      if (model.empty()) throw ConfigError("ranker '" + std::string(text) + "' names no model");
      return {kind, std::move(model)};
    }
  }
  throw ConfigError("unknown ranker '" + std::string(text) + "'");
}

std::string RankerId::str() const {
  switch (kind) {
    case Kind::bm25: return "bm25";
    case Kind::mmr: return "mmr";
    case Kind::random: return "random";
    case Kind::llm: return "llm:" + model;
    case Kind::replay: return "replay:" + model;
  }
  return {};
}

// ----------------------------------------------------------------- Ranking

bool is_permutation_of_pool(std::span<const int> v) noexcept {
  if (v.size() != kPoolSize) return false;
  std::array<bool, kPoolSize> seen{};
  for (const int x : v) {
    if (x < 0 || x >= kPoolSize || seen[static_cast<std::size_t>(x)]) return false;
    seen[static_cast<std::size_t>(x)] = true;
  }
  return true;
}

Ranking::Ranking(std::string cluster_id, RankerId ranker, RankedIndices ranked, bool fallback_used,
                 std::optional<std::string> raw_response)
    : cluster_id_(std::move(cluster_id)),
      ranker_(std::move(ranker)),
      ranked_(ranked),
      fallback_used_(fallback_used),
      raw_response_(std::move(raw_response)) {
  if (!is_permutation_of_pool(ranked_))
    throw InvalidRanking("ranking for " + cluster_id_ + " by " + ranker_.str() +
                         " is not a permutation of 0..7");
  if (fallback_used_ && !raw_response_)
    throw InvalidRanking("fallback ranking for " + cluster_id_ + " lacks the raw response");
}

// -------------------------------------------------------------------- BM25

std::vector<double> bm25_scores(std::span<const std::string> query_terms,
                                std::span<const std::vector<std::string>> docs,
                                const Bm25Params& params) {
  const auto n_docs = docs.size();
  std::vector<double> scores(n_docs, 0.0);
  if (n_docs == 0) return scores;

  std::vector<std::map<std::string, int>> tf(n_docs);
  std::map<std::string, int> df;
  double total_len = 0.0;
  for (std::size_t d = 0; d < n_docs; ++d) {
    for (const auto& t : docs[d]) ++tf[d][t];
    for (const auto& [t, _] : tf[d]) ++df[t];
    total_len += static_cast<double>(docs[d].size());
  }
  const double avgdl = total_len / static_cast<double>(n_docs);
  if (avgdl == 0.0) return scores;

  std::map<std::string, double> idf;
  double idf_sum = 0.0;
  std::vector<std::string> negative;
  const auto n = static_cast<double>(n_docs);
  for (const auto& [t, f] : df) {
    const double v = std::log(n - f + 0.5) - std::log(f + 0.5);
    idf[t] = v;
    idf_sum += v;
    if (v < 0.0) negative.push_back(t);
  }
  const double eps = params.epsilon * (idf_sum / static_cast<double>(idf.size()));
  for (const auto& t : negative) idf[t] = eps;

  for (const auto& q : query_terms) {
    const auto it = idf.find(q);
    if (it == idf.end()) continue;
    for (std::size_t d = 0; d < n_docs; ++d) {
      const auto f = tf[d].find(q);
      const double freq = f == tf[d].end() ? 0.0 : static_cast<double>(f->second);
      const double len = static_cast<double>(docs[d].size());
      scores[d] += it->second * (freq * (params.k1 + 1.0) /
                                 (freq + params.k1 * (1.0 - params.b + params.b * len / avgdl)));
    }
  }
  return scores;
}

RankedIndices order_by_score(const RelevanceScores& scores) {
  RankedIndices idx{};
  for (int i = 0; i < kPoolSize; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  return idx;
}

Bm25Result bm25_rank(const TokenSet& query_tokens,
                     std::span<const std::vector<std::string>> doc_terms,
                     const Bm25Params& params) {
  if (doc_terms.size() != kPoolSize)
    throw InvalidRanking("bm25_rank expects 8 documents, got " + std::to_string(doc_terms.size()));
  const std::vector<std::string> query(query_tokens.begin(), query_tokens.end());
  const auto raw = bm25_scores(query, doc_terms, params);
  Bm25Result out{};
  std::copy(raw.begin(), raw.end(), out.scores.begin());
  out.ranked = order_by_score(out.scores);
  return out;
}

// --------------------------------------------------------------------- MMR

RankedIndices mmr_rank(const RelevanceScores& relevance, std::span<const TokenSet> doc_tokens,
                       const MmrConfig& config) {
  if (!(config.lambda >= 0.0 && config.lambda <= 1.0))
    throw ConfigError("MMR lambda must lie in [0, 1]");
  if (doc_tokens.size() != kPoolSize)
    throw InvalidRanking("mmr_rank expects 8 token sets, got " + std::to_string(doc_tokens.size()));

  const auto [lo_it, hi_it] = std::minmax_element(relevance.begin(), relevance.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  std::array<double, kPoolSize> rel{};
  for (std::size_t i = 0; i < kPoolSize; ++i)
    rel[i] = span > 0.0 ? (relevance[i] - lo) / span : 0.5;

  std::array<std::array<double, kPoolSize>, kPoolSize> sim{};
  for (std::size_t i = 0; i < kPoolSize; ++i)
    for (std::size_t j = i + 1; j < kPoolSize; ++j)
      sim[i][j] = sim[j][i] = jaccard(doc_tokens[i], doc_tokens[j]);

  RankedIndices order{};
  std::array<bool, kPoolSize> taken{};
  std::array<double, kPoolSize> max_sim{};  // max similarity to the selected set

  for (std::size_t step = 0; step < kPoolSize; ++step) {
    int best = -1;
    double best_score = 0.0;
    for (std::size_t i = 0; i < kPoolSize; ++i) {
      if (taken[i]) continue;
      const double score =
          step == 0 ? rel[i] : config.lambda * rel[i] - (1.0 - config.lambda) * max_sim[i];
      if (best < 0 || score > best_score) {
        best = static_cast<int>(i);
        best_score = score;
      }
    }
    const auto b = static_cast<std::size_t>(best);
    order[step] = best;
    taken[b] = true;
    for (std::size_t i = 0; i < kPoolSize; ++i) max_sim[i] = std::max(max_sim[i], sim[i][b]);
  }
  return order;
}

// ------------------------------------------------------------------ Random

RankedIndices random_rank(const std::string& cluster_id, std::uint64_t seed) {
  const auto perm = seeded_permutation(kPoolSize, hash64(seed, cluster_id));
  RankedIndices out{};
  std::copy(perm.begin(), perm.end(), out.begin());
  return out;
}

// --------------------------------------------------------------------- LLM

std::string build_prompt(const EvidencePool& pool) {
  std::ostringstream p;
  p << "You are ranking evidence documents for a query.\n"
       "Task: You are given exactly 8 candidate documents.\n"
       "Rank ALL 8 documents from best to worst.\n"
       "Ranking goal: 1) Relevance to the query.\n"
       "Return ONLY strict JSON with exactly 8 unique indices:{\"ranked_indices\":[...]}\n"
       "\n"
       "Query: "
    << pool.query << "\n\nDocuments:\n";
  for (std::size_t pos = 0; pos < kPoolSize; ++pos) {
    const auto idx = static_cast<std::size_t>(pool.presentation_order[pos]);
    p << "[" << pos << "] " << pool.documents[idx].text << "\n";
  }
  return p.str();
}

namespace {

std::string strip_code_fences(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, 3, "```") == 0) {
      i += 3;
      // drop an info string such as "json" up to the end of the line
      while (i < text.size() && text[i] != '\n' && text[i] != '{') ++i;
      continue;
    }
    out.push_back(text[i++]);
  }
  return out;
}

/// End (exclusive) of the balanced object starting at `start`, honouring
/// JSON string escapes; npos if unbalanced.
std::size_t balanced_object_end(std::string_view s, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace

ParseOutcome parse_ranking_response(std::string_view text) {
  const std::string cleaned = strip_code_fences(text);
  const std::string_view s(cleaned);
  std::size_t pos = 0;
  while ((pos = s.find('{', pos)) != std::string_view::npos) {
    const auto end = balanced_object_end(s, pos);
    if (end == std::string_view::npos) break;
    const auto candidate = s.substr(pos, end - pos);
    if (candidate.find("ranked_indices") == std::string_view::npos) {
      pos = end;
      continue;
    }
    json obj;
    try {
      obj = json::parse(candidate);
    } catch (const json::parse_error&) {
      // a nested object may still be valid, so keep scanning inside this one
      ++pos;
      continue;
    }
    if (!obj.is_object() || !obj.contains("ranked_indices")) {
      ++pos;
      continue;
    }
    const auto& arr = obj["ranked_indices"];
    if (!arr.is_array()) return {std::nullopt, "ranked_indices is not an array"};
    if (arr.size() != kPoolSize)
      return {std::nullopt, "ranked_indices has " + std::to_string(arr.size()) + " entries, expected 8"};
    RankedIndices positions{};
    std::array<bool, kPoolSize> seen{};
    for (std::size_t i = 0; i < kPoolSize; ++i) {
      if (!arr[i].is_number_integer()) return {std::nullopt, "ranked_indices holds a non-integer"};
      const auto v = arr[i].get<long long>();
      if (v < 0 || v >= kPoolSize)
        return {std::nullopt, "index " + std::to_string(v) + " out of range 0..7"};
      if (seen[static_cast<std::size_t>(v)])
        return {std::nullopt, "duplicate index " + std::to_string(v)};
      seen[static_cast<std::size_t>(v)] = true;
      positions[i] = static_cast<int>(v);
    }
    return {positions, {}};
  }
  return {std::nullopt, "no JSON object with ranked_indices found"};
}

RankedIndices positions_to_pool_indices(const RankedIndices& positions,
                                        const PresentationOrder& order) {
  RankedIndices out{};
  for (std::size_t i = 0; i < kPoolSize; ++i)
    out[i] = order[static_cast<std::size_t>(positions[i])];
  return out;
}

Ranking ranking_from_response(const EvidencePool& pool, const RankerId& ranker, std::string raw) {
  const auto parsed = parse_ranking_response(raw);
  if (parsed.ok())
    return Ranking(pool.cluster_id, ranker,
                   positions_to_pool_indices(*parsed.positions, pool.presentation_order), false,
                   std::move(raw));
  RankedIndices fallback{};
  std::copy(pool.presentation_order.begin(), pool.presentation_order.end(), fallback.begin());
  return Ranking(pool.cluster_id, ranker, fallback, true, std::move(raw));
}

// ---------------------------------------------------------------- Fixtures

std::filesystem::path FixtureStore::path_for(const std::string& model,
                                             const std::string& cluster_id) const {
  if (cluster_id.empty() || cluster_id == "." || cluster_id == ".." ||
      cluster_id.find('/') != std::string::npos || cluster_id.find('\\') != std::string::npos)
    throw Error("cluster_id '" + cluster_id + "' cannot be used as a fixture file name");
  return root_ / model / cluster_id;
}

bool FixtureStore::contains(const std::string& model, const std::string& cluster_id) const {
  return std::filesystem::is_regular_file(path_for(model, cluster_id));
}

std::string FixtureStore::load(const std::string& model, const std::string& cluster_id) const {
  const auto path = path_for(model, cluster_id);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFixture("no recorded response for model '" + model + "', cluster " + cluster_id);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void FixtureStore::store(const std::string& model, const std::string& cluster_id,
                         const std::string& raw) const {
  const auto path = path_for(model, cluster_id);
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << raw;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Ranking llm_rank(GatewayClient& client, const std::string& model, const EvidencePool& pool,
                 const FixtureStore* fixtures) {
  auto raw = client.rank(model, build_prompt(pool), 0.0);
  if (fixtures) fixtures->store(model, pool.cluster_id, raw);
  return ranking_from_response(pool, RankerId{RankerId::Kind::llm, model}, std::move(raw));
}

Ranking replay_rank(const FixtureStore& fixtures, const std::string& model,
                    const EvidencePool& pool) {
  return ranking_from_response(pool, RankerId{RankerId::Kind::replay, model},
                               fixtures.load(model, pool.cluster_id));
}

// -------------------------------------------------------------------- JSON

json ranking_to_json(const Ranking& r) {
  json j{{"cluster_id", r.cluster_id()},
         {"ranker_id", r.ranker().str()},
         {"ranked_indices", r.ranked_indices()},
         {"fallback_used", r.fallback_used()}};
  if (r.raw_response()) j["raw_response"] = *r.raw_response();
  return j;
}

Ranking ranking_from_json(const json& j) {
  try {
    RankedIndices ranked{};
    const auto& arr = j.at("ranked_indices");
    if (!arr.is_array() || arr.size() != kPoolSize)
      throw InvalidRanking("ranked_indices must hold 8 entries");
    for (std::size_t i = 0; i < kPoolSize; ++i) ranked[i] = arr[i].get<int>();
    std::optional<std::string> raw;
    if (j.contains("raw_response") && !j["raw_response"].is_null())
      raw = j["raw_response"].get<std::string>();
    return Ranking(j.at("cluster_id").get<std::string>(),
                   RankerId::parse(j.at("ranker_id").get<std::string>()), ranked,
                   j.value("fallback_used", false), std::move(raw));
  } catch (const json::exception& e) {
    throw SchemaError(e.what());
  }
}

void save_rankings(const std::vector<Ranking>& rankings, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : rankings) out << ranking_to_json(r).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Ranking> load_rankings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Ranking> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(ranking_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw SchemaError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw SchemaError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ------------------------------------------------------------- Rank stage

PoolFeatures PoolFeatures::extract(const EvidencePool& pool, const Tokenizer& tokenizer) {
  PoolFeatures f;
  f.query_tokens = tokenizer.tokenize(pool.query);
  f.summary_tokens = tokenizer.tokenize(pool.summary);
  f.doc_terms.reserve(pool.documents.size());
  f.doc_tokens.reserve(pool.documents.size());
  for (const auto& d : pool.documents) {
    auto terms = tokenizer.terms(d.text);
    f.doc_tokens.emplace_back(terms.begin(), terms.end());
    f.doc_terms.push_back(std::move(terms));
  }
  return f;
}

namespace {

Ranking call_with_backoff(GatewayClient& client, const std::string& model, const EvidencePool& pool,
                          const FixtureStore* fixtures, const RankOptions& options) {
  int delay_ms = options.backoff_initial_ms;
  for (int attempt = 0;; ++attempt) {
    try {
      return llm_rank(client, model, pool, fixtures);
    } catch (const BackendError& e) {
      if (!e.throttled() || attempt >= options.max_retries) throw;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    delay_ms *= 2;
  }
}

}  // namespace

RankStageResult rank_pools(const std::vector<EvidencePool>& pools, const Tokenizer& tokenizer,
                           const RankOptions& options, GatewayClient* client) {
  const auto n_rankers = options.rankers.size();
  std::vector<std::optional<Ranking>> slots(pools.size() * n_rankers);
  std::optional<FixtureStore> fixtures;
  if (options.fixtures_dir) fixtures.emplace(*options.fixtures_dir);

  struct LlmTask {
    std::size_t pool;
    std::size_t ranker;
  };
  std::vector<LlmTask> llm_tasks;

  for (std::size_t p = 0; p < pools.size(); ++p) {
    const auto& pool = pools[p];
    const auto features = PoolFeatures::extract(pool, tokenizer);
    std::optional<Bm25Result> bm25;
    auto get_bm25 = [&]() -> const Bm25Result& {
      if (!bm25) bm25 = bm25_rank(features.query_tokens, features.doc_terms);
      return *bm25;
    };
    for (std::size_t r = 0; r < n_rankers; ++r) {
      const auto& id = options.rankers[r];
      auto& slot = slots[p * n_rankers + r];
      try {
        switch (id.kind) {
          case RankerId::Kind::bm25: slot.emplace(pool.cluster_id, id, get_bm25().ranked); break;
          case RankerId::Kind::mmr:
            slot.emplace(pool.cluster_id, id,
                         mmr_rank(get_bm25().scores, features.doc_tokens, MmrConfig{options.lambda}));
            break;
          case RankerId::Kind::random:
            slot.emplace(pool.cluster_id, id, random_rank(pool.cluster_id, options.random_seed));
            break;
          case RankerId::Kind::replay:
            if (!fixtures) throw ConfigError("replay ranker requires a fixture directory");
            slot.emplace(replay_rank(*fixtures, id.model, pool));
            break;
          case RankerId::Kind::llm:
            // completed responses from an interrupted run are reused
            if (fixtures && fixtures->contains(id.model, pool.cluster_id)) {
              slot.emplace(ranking_from_response(pool, id, fixtures->load(id.model, pool.cluster_id)));
            } else {
              llm_tasks.push_back({p, r});
            }
            break;
        }
      } catch (const StageError&) {
        throw;
      } catch (const Error& e) {
        throw StageError("rank", pool.cluster_id, e.what(), std::current_exception());
      }
    }
  }

  if (!llm_tasks.empty()) {
    if (!client) throw StageError("rank", {}, "llm ranker configured but no gateway URL given");
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::optional<StageError> first_error;
    auto worker = [&] {
      while (true) {
        const auto t = next.fetch_add(1);
        if (t >= llm_tasks.size()) return;
        {
          std::lock_guard lock(err_mutex);
          if (first_error) return;
        }
        const auto [p, r] = llm_tasks[t];
        const auto& pool = pools[p];
        try {
          slots[p * n_rankers + r].emplace(call_with_backoff(
              *client, options.rankers[r].model, pool, fixtures ? &*fixtures : nullptr, options));
        } catch (const Error& e) {
          std::lock_guard lock(err_mutex);
          if (!first_error)
            first_error.emplace("rank", pool.cluster_id, std::string(e.what()) + " (retriable)",
                                std::current_exception());
        }
      }
    };
    const auto n_threads = std::max<std::size_t>(1, std::min(options.max_inflight, llm_tasks.size()));
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) throw *first_error;
  }

  RankStageResult result;
  result.rankings.reserve(slots.size());
  for (auto& s : slots) {
    if (s->fallback_used()) ++result.fallbacks;
    result.rankings.push_back(std::move(*s));
  }
  return result;
}

}  // namespace poolrank
