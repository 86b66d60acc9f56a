// Generates the shipped offline fixture set from a run config:
//   - a synthetic clustered corpus split across the configured dataset files
//   - recorded responses for two mock LLM rankers
//   - a warmed embedding cache from the feature-hashing provider
// Everything is a deterministic function of the seeds below and the config.

#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "poolrank/corpus.hpp"
#include "poolrank/embeddings.hpp"
#include "poolrank/hashing.hpp"
#include "poolrank/rankers.hpp"
#include "poolrank/runner.hpp"

using namespace poolrank;
using nlohmann::json;

namespace {

constexpr std::uint64_t kCorpusSeed = 20240611;
constexpr int kClusters = 48;

const std::vector<std::vector<std::string>> kTopics = {
    {"wildfire", "evacuation", "firefighters", "acres", "containment", "blaze", "canyon", "smoke", "drought", "embers", "ridge", "hotshot"},
    {"election", "ballots", "candidate", "turnout", "precinct", "recount", "campaign", "voters", "primary", "polling", "senate", "delegates"},
    {"earthquake", "magnitude", "aftershock", "epicenter", "rubble", "tsunami", "seismic", "collapsed", "rescuers", "fault", "tremor", "survivors"},
    {"merger", "shareholders", "acquisition", "antitrust", "regulators", "valuation", "dividend", "stock", "bid", "conglomerate", "executives", "deal"},
    {"vaccine", "trial", "dose", "immunity", "pharmaceutical", "efficacy", "placebo", "booster", "regulators", "antibodies", "patients", "clinic"},
    {"hurricane", "landfall", "storm", "surge", "flooding", "evacuees", "winds", "coastal", "shelters", "forecasters", "rainfall", "category"},
    {"satellite", "launch", "rocket", "orbit", "payload", "booster", "spacecraft", "mission", "astronauts", "capsule", "countdown", "telescope"},
    {"strike", "union", "workers", "wages", "picket", "contract", "negotiators", "walkout", "factory", "overtime", "pension", "bargaining"},
    {"smartphone", "chip", "software", "privacy", "users", "update", "encryption", "app", "developers", "battery", "device", "cloud"},
    {"museum", "painting", "auction", "collector", "gallery", "exhibit", "sculpture", "heist", "curator", "masterpiece", "artist", "restoration"},
    {"championship", "coach", "playoffs", "quarterback", "stadium", "season", "injury", "roster", "fans", "tournament", "referee", "trophy"},
    {"court", "verdict", "jury", "prosecutors", "defendant", "appeal", "testimony", "judge", "sentencing", "lawsuit", "attorneys", "ruling"}};

const std::vector<std::string> kGeneric = {
    "officials", "said",     "reported", "according", "statement", "week",    "local",    "city",
    "group",     "people",   "national", "government", "monday",   "tuesday", "agency",   "residents",
    "spokesman", "announced", "expected", "months",    "country",  "region",  "authorities", "sources",
    "confirmed", "thursday", "public",   "interview",  "program",  "federal", "million",  "plans"};

const std::vector<std::string> kStop = {"the", "and", "of", "to", "in", "a", "was", "for", "on", "with",
                                        "that", "by", "it", "is", "at", "from", "has", "had", "were", "after"};

class Gen {
 public:
  explicit Gen(std::uint64_t key) : rng_(key) {}
  std::uint32_t below(std::uint32_t n) { return rng_.below(n); }
  template <typename T>
  const T& pick(const std::vector<T>& v) { return v[below(static_cast<std::uint32_t>(v.size()))]; }

  std::string sentence(const std::vector<std::string>& topic, int words, int topic_weight) {
    std::string s;
    for (int w = 0; w < words; ++w) {
      const auto roll = static_cast<int>(below(100));
      std::string word;
      if (roll < topic_weight) {
        word = pick(topic);
      } else if (roll < topic_weight + 25) {
        word = pick(kGeneric);
      } else if (roll < 96) {
        word = pick(kStop);
      } else {
        word = std::to_string(1990 + below(35));
      }
      if (w == 0) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
      if (!s.empty()) s += ' ';
      s += word;
    }
    static const char* kEnds[] = {".", ".", ".", "!", "?"};
    return s + kEnds[below(5)];
  }

  std::string article(const std::vector<std::string>& topic, int topic_weight) {
    const int n = 4 + static_cast<int>(below(5));
    std::string a;
    for (int i = 0; i < n; ++i) {
      if (!a.empty()) a += ' ';
      a += sentence(topic, 9 + static_cast<int>(below(9)), topic_weight);
    }
    return a;
  }

 private:
  CounterRng rng_;
};

json make_record(int c) {
  Gen g(hash64(kCorpusSeed, "cluster-" + std::to_string(c)));
  const auto& topic = kTopics[static_cast<std::size_t>(c) % kTopics.size()];
  // a few clusters fall below eight usable sources and must be skipped
  const int n_sources = (c % 11 == 5) ? 7 : 8 + static_cast<int>(g.below(5));
  std::vector<std::string> sources;
  for (int s = 0; s < n_sources; ++s) {
    if (s > 0 && g.below(6) == 0) {
      // near-duplicate of an earlier source: same text, new closing sentence
      sources.push_back(sources[g.below(static_cast<std::uint32_t>(sources.size()))] + " " +
                        g.sentence(topic, 10, 40));
    } else {
      sources.push_back(g.article(topic, 15 + static_cast<int>(g.below(45))));
    }
  }
  std::string summary;
  const int n_sent = 3 + static_cast<int>(g.below(3));
  for (int i = 0; i < n_sent; ++i) {
    if (!summary.empty()) summary += ' ';
    summary += g.sentence(topic, 12 + static_cast<int>(g.below(8)), 55);
  }
  if (c == 7) summary = summary + " " + std::string(500, 'x') + ".";  // exercises query truncation
  json rec{{"summary", summary}};
  if (c % 2 == 0) {
    rec["sources"] = sources;
  } else {
    std::string joined;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      if (i) joined += (i % 3 == 0) ? " ||||| " : "|||||";
      joined += sources[i];
    }
    if (c % 4 == 1) joined += "|||||   ";  // trailing blank source, dropped as unusable
    rec["sources"] = joined;
  }
  return rec;
}

RankedIndices to_positions(const RankedIndices& pool_order, const PresentationOrder& order) {
  std::array<int, kPoolSize> position_of{};
  for (int p = 0; p < kPoolSize; ++p) position_of[static_cast<std::size_t>(order[static_cast<std::size_t>(p)])] = p;
  RankedIndices out{};
  for (std::size_t i = 0; i < kPoolSize; ++i) out[i] = position_of[static_cast<std::size_t>(pool_order[i])];
  return out;
}

std::string json_indices(const RankedIndices& v) {
  return json{{"ranked_indices", v}}.dump();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <config.json>\n";
    return 2;
  }
  try {
    const auto cfg_path = std::filesystem::path(argv[1]);
    std::ifstream cin(cfg_path);
    const auto raw_cfg = json::parse(cin);
    const auto base = std::filesystem::absolute(cfg_path).parent_path();

    // 1. corpus, split across the dataset files in order
    std::vector<std::filesystem::path> files;
    for (const auto& d : raw_cfg.at("dataset")) files.push_back(base / d.get<std::string>());
    for (std::size_t f = 0; f < files.size(); ++f) {
      std::filesystem::create_directories(files[f].parent_path());
      std::ofstream out(files[f], std::ios::binary | std::ios::trunc);
      const int lo = static_cast<int>(kClusters * f / files.size());
      const int hi = static_cast<int>(kClusters * (f + 1) / files.size());
      for (int c = lo; c < hi; ++c) out << make_record(c).dump() << '\n';
    }

    const auto config = RunConfig::from_json(raw_cfg, base);
    const auto records = read_dataset(config.dataset);
    const auto built = build_pools(records, config.pool);
    const Tokenizer tokenizer(Stopwords::load(config.stopwords));

    // 2. mock LLM responses
    if (!config.fixtures) throw std::runtime_error("config has no fixtures directory");
    std::filesystem::remove_all(*config.fixtures);
    const FixtureStore store(*config.fixtures);
    for (const auto& pool : built.pools) {
      const auto f = PoolFeatures::extract(pool, tokenizer);
      const auto bm25 = bm25_rank(f.query_tokens, f.doc_terms);
      store.store("mock-bm25", pool.cluster_id, json_indices(to_positions(bm25.ranked, pool.presentation_order)));

      // noisy lexical ranker: a few seeded adjacent swaps, assorted chat wrappers
      Gen g(hash64(kCorpusSeed ^ 0x6e6f697379ULL, pool.cluster_id));
      auto noisy = bm25.ranked;
      for (int s = 0; s < 4; ++s) {
        const auto i = g.below(kPoolSize - 1);
        std::swap(noisy[i], noisy[i + 1]);
      }
      const auto body = json_indices(to_positions(noisy, pool.presentation_order));
      std::string raw;
      switch (g.below(4)) {
        case 0: raw = body; break;
        case 1: raw = "```json\n" + body + "\n```"; break;
        case 2: raw = "Here is the ranking you asked for:\n" + body + "\nLet me know if you need more."; break;
        default: raw = "  " + body + "\n"; break;
      }
      store.store("mock-noisy", pool.cluster_id, raw);
    }

    // 3. embedding cache
    std::filesystem::remove(config.embedding_cache);
    auto cache = EmbeddingCache::open(config.embedding_cache);
    HashingEmbeddingProvider provider(64);
    const EmbedOptions eo{config.embedding_model, false, config.embedding_batch};
    for (const auto& pool : built.pools) {
      std::vector<std::string> texts;
      for (const auto& d : pool.documents) texts.push_back(d.text);
      for (auto& s : split_sentences(pool.summary)) texts.push_back(std::move(s));
      (void)embed_texts(&provider, cache, texts, eo);
    }
    cache.save();
    std::cerr << records.size() << " clusters, " << built.pools.size() << " pools, " << built.skipped
              << " skipped, " << cache.size() << " cached embeddings\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
