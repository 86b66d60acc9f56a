#include "poolrank/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "poolrank/error.hpp"
#include "poolrank/kernels.hpp"

namespace poolrank {

using nlohmann::json;

Selection select_top_k(const Ranking& r, int k) {
  if (k < 1 || k > kPoolSize)
    throw BudgetOutOfRange("selection budget " + std::to_string(k) + " outside 1..8");
  Selection s{r.cluster_id(), r.ranker(), k, {}};
  const auto& ranked = r.ranked_indices();
  s.indices.assign(ranked.begin(), ranked.begin() + k);
  std::sort(s.indices.begin(), s.indices.end());
  return s;
}

namespace {

std::size_t covered(std::span<const TokenSet> selected, const TokenSet& target) {
  std::size_t n = 0;
  for (const auto& t : target)
    if (std::any_of(selected.begin(), selected.end(), [&](const TokenSet& s) { return s.contains(t); }))
      ++n;
  return n;
}

}  // namespace

double coverage(std::span<const TokenSet> selected, const TokenSet& query, Diagnostics* diag) {
  if (query.empty()) {
    if (diag) ++diag->empty_query;
    return 0.0;
  }
  return static_cast<double>(covered(selected, query)) / static_cast<double>(query.size());
}

double summary_recall(std::span<const TokenSet> selected, const TokenSet& summary,
                      Diagnostics* diag) {
  if (summary.empty()) {
    if (diag) ++diag->empty_summary;
    return 0.0;
  }
  return static_cast<double>(covered(selected, summary)) / static_cast<double>(summary.size());
}

double redundancy(std::span<const TokenSet> selected, Diagnostics* diag) {
  const auto k = selected.size();
  if (k < 2) throw BudgetTooSmall("redundancy needs at least two selected documents");
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      if (diag && selected[i].empty() && selected[j].empty()) ++diag->empty_jaccard;
      sum += jaccard(selected[i], selected[j]);
    }
  }
  return sum / static_cast<double>(k * (k - 1) / 2);
}

double sem_redundancy(std::span<const EmbeddingVector> selected) {
  const auto k = selected.size();
  if (k < 2) throw BudgetTooSmall("semantic redundancy needs at least two selected documents");
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      if (selected[i].dim() != selected[j].dim())
        throw DimensionMismatch("embedding dimensions differ within a selection");
      sum += kernels::dot(selected[i].view(), selected[j].view());
    }
  return sum / static_cast<double>(k * (k - 1) / 2);
}

double sem_coverage(std::span<const EmbeddingVector> sentences,
                    std::span<const EmbeddingVector> selected) {
  if (sentences.empty()) throw NoSummarySentences("summary has no sentences to cover");
  if (selected.empty()) throw BudgetTooSmall("semantic coverage needs a nonempty selection");
  double sum = 0.0;
  for (const auto& s : sentences) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& e : selected) {
      if (s.dim() != e.dim()) throw DimensionMismatch("sentence and document dimensions differ");
      best = std::max(best, kernels::dot(s.view(), e.view()));
    }
    sum += best;
  }
  return sum / static_cast<double>(sentences.size());
}

double kendall_tau(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw LengthMismatch("rankings differ in length");
  const auto n = a.size();
  if (n < 2) throw LengthMismatch("kendall tau needs at least two items");
  // rank position of each item in each ranking
  std::vector<int> pos_a(n, -1);
  std::vector<int> pos_b(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] < 0 || static_cast<std::size_t>(a[i]) >= n || b[i] < 0 || static_cast<std::size_t>(b[i]) >= n)
      throw LengthMismatch("rankings are not permutations of the same items");
    pos_a[static_cast<std::size_t>(a[i])] = static_cast<int>(i);
    pos_b[static_cast<std::size_t>(b[i])] = static_cast<int>(i);
  }
  if (std::count(pos_a.begin(), pos_a.end(), -1) != 0 || std::count(pos_b.begin(), pos_b.end(), -1) != 0)
    throw LengthMismatch("rankings are not permutations of the same items");
  long concordant = 0;
  long discordant = 0;
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = x + 1; y < n; ++y) {
      const long s = static_cast<long>(pos_a[x] - pos_a[y]) * (pos_b[x] - pos_b[y]);
      if (s > 0) {
        ++concordant;
      } else if (s < 0) {
        ++discordant;
      }
    }
  return static_cast<double>(concordant - discordant) / static_cast<double>(n * (n - 1) / 2);
}

double kendall_tau(const Ranking& a, const Ranking& b) {
  return kendall_tau(std::span<const int>(a.ranked_indices()), std::span<const int>(b.ranked_indices()));
}

double topk_jaccard(const Ranking& a, const Ranking& b, int k) {
  const auto sa = select_top_k(a, k);
  const auto sb = select_top_k(b, k);
  std::vector<int> inter;
  std::set_intersection(sa.indices.begin(), sa.indices.end(), sb.indices.begin(), sb.indices.end(),
                        std::back_inserter(inter));
  const auto uni = sa.indices.size() + sb.indices.size() - inter.size();
  return static_cast<double>(inter.size()) / static_cast<double>(uni);
}

std::optional<double> metric_value(const SelectionMetrics& m, std::string_view name) {
  if (name == "coverage") return m.coverage;
  if (name == "redundancy") return m.redundancy;
  if (name == "summary_recall") return m.summary_recall;
  if (name == "sem_redundancy") return m.sem_redundancy;
  if (name == "sem_coverage") return m.sem_coverage;
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

SelectionMetrics score_selection(const Selection& sel, const PoolScoringInputs& inputs,
                                 Diagnostics* diag) {
  std::vector<TokenSet> tokens;
  std::vector<EmbeddingVector> vecs;
  tokens.reserve(sel.indices.size());
  vecs.reserve(sel.indices.size());
  for (const int i : sel.indices) {
    tokens.push_back(inputs.features.doc_tokens.at(static_cast<std::size_t>(i)));
    vecs.push_back(inputs.doc_embeddings.at(static_cast<std::size_t>(i)));
  }
  SelectionMetrics m;
  m.coverage = coverage(tokens, inputs.features.query_tokens, diag);
  m.summary_recall = summary_recall(tokens, inputs.features.summary_tokens, diag);
  if (sel.indices.size() >= 2) {
    m.redundancy = redundancy(tokens, diag);
    m.sem_redundancy = sem_redundancy(vecs);
  }
  m.sem_coverage = sem_coverage(inputs.sentence_embeddings, vecs);
  return m;
}

ScoreStageResult score_pools(const std::vector<EvidencePool>& pools,
                             const std::vector<Ranking>& rankings,
                             const std::vector<std::string>& ranker_order, const std::vector<int>& ks,
                             const Tokenizer& tokenizer, EmbeddingProvider* provider,
                             EmbeddingCache& cache, const EmbedOptions& embed_options) {
  std::map<std::pair<std::string, std::string>, const Ranking*> by_key;
  for (const auto& r : rankings) by_key[{r.cluster_id(), r.ranker().str()}] = &r;

  ScoreStageResult out;
  for (const auto& pool : pools) {
    try {
      PoolScoringInputs inputs;
      inputs.features = PoolFeatures::extract(pool, tokenizer);
      std::vector<std::string> doc_texts;
      for (const auto& d : pool.documents) doc_texts.push_back(d.text);
      inputs.doc_embeddings = embed_texts(provider, cache, doc_texts, embed_options);
      inputs.sentence_embeddings =
          embed_texts(provider, cache, split_sentences(pool.summary), embed_options);

      std::vector<const Ranking*> ranked;
      for (const auto& id : ranker_order) {
        const auto it = by_key.find({pool.cluster_id, id});
        if (it == by_key.end()) throw MissingMetrics("no ranking from " + id);
        ranked.push_back(it->second);
      }
      for (const auto* r : ranked)
        for (const int k : ks)
          out.metrics.push_back(MetricsRow{pool.cluster_id, r->ranker().str(), k,
                                           score_selection(select_top_k(*r, k), inputs, &out.diagnostics)});
      for (std::size_t a = 0; a < ranked.size(); ++a)
        for (std::size_t b = a + 1; b < ranked.size(); ++b) {
          const double tau = kendall_tau(*ranked[a], *ranked[b]);
          for (const int k : ks)
            out.agreement.push_back(AgreementRow{pool.cluster_id, ranker_order[a], ranker_order[b], k,
                                                 tau, topk_jaccard(*ranked[a], *ranked[b], k)});
        }
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      throw StageError("score", pool.cluster_id, e.what(), std::current_exception());
    }
  }
  return out;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

template <typename Row, typename ToJson>
void write_lines(const std::vector<Row>& rows, const std::filesystem::path& path, ToJson to_json) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : rows) out << to_json(r).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

template <typename Row, typename FromJson>
std::vector<Row> read_lines(const std::filesystem::path& path, FromJson from_json) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Row> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      rows.push_back(from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace

json metrics_row_to_json(const MetricsRow& row) {
  const auto& m = row.metrics;
  return json{{"cluster_id", row.cluster_id},
              {"ranker_id", row.ranker_id},
              {"k", row.k},
              {"coverage", m.coverage},
              {"redundancy", optional_number(m.redundancy)},
              {"summary_recall", m.summary_recall},
              {"sem_redundancy", optional_number(m.sem_redundancy)},
              {"sem_coverage", m.sem_coverage}};
}

MetricsRow metrics_row_from_json(const json& j) {
  MetricsRow row;
  row.cluster_id = j.at("cluster_id").get<std::string>();
  row.ranker_id = j.at("ranker_id").get<std::string>();
  row.k = j.at("k").get<int>();
  row.metrics.coverage = j.at("coverage").get<double>();
  row.metrics.redundancy = read_optional(j, "redundancy");
  row.metrics.summary_recall = j.at("summary_recall").get<double>();
  row.metrics.sem_redundancy = read_optional(j, "sem_redundancy");
  row.metrics.sem_coverage = j.at("sem_coverage").get<double>();
  return row;
}

json agreement_row_to_json(const AgreementRow& row) {
  return json{{"cluster_id", row.cluster_id},  {"ranker_a", row.ranker_a},
              {"ranker_b", row.ranker_b},      {"k", row.k},
              {"kendall_tau", row.kendall_tau}, {"topk_jaccard", row.topk_jaccard}};
}

AgreementRow agreement_row_from_json(const json& j) {
  return AgreementRow{j.at("cluster_id").get<std::string>(), j.at("ranker_a").get<std::string>(),
                      j.at("ranker_b").get<std::string>(),   j.at("k").get<int>(),
                      j.at("kendall_tau").get<double>(),     j.at("topk_jaccard").get<double>()};
}

void save_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  write_lines(rows, path, metrics_row_to_json);
}
std::vector<MetricsRow> load_metrics(const std::filesystem::path& path) {
  return read_lines<MetricsRow>(path, metrics_row_from_json);
}
void save_agreement(const std::vector<AgreementRow>& rows, const std::filesystem::path& path) {
  write_lines(rows, path, agreement_row_to_json);
}
std::vector<AgreementRow> load_agreement(const std::filesystem::path& path) {
  return read_lines<AgreementRow>(path, agreement_row_from_json);
}

}  // namespace poolrank
