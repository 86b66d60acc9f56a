#include "poolrank/embeddings.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "poolrank/error.hpp"
#include "poolrank/gateway_client.hpp"
#include "poolrank/hashing.hpp"
#include "poolrank/kernels.hpp"
#include "poolrank/textproc.hpp"

namespace poolrank {

using nlohmann::json;

std::vector<double> normalize(std::span<const double> raw) {
  double sq = 0.0;
  for (const double v : raw) sq += v * v;
  if (!(sq > 0.0) || !std::isfinite(sq)) throw ZeroVector("cannot normalise a zero or non-finite vector");
  const double norm = std::sqrt(sq);
  std::vector<double> out(raw.begin(), raw.end());
  for (auto& v : out) v /= norm;
  return out;
}

std::string embedding_key(const std::string& model, const std::string& text) {
  std::string buf;
  buf.reserve(model.size() + 1 + text.size());
  buf.append(model).push_back('\0');
  buf.append(text);
  return sha256_hex(buf);
}

std::vector<std::vector<double>> GatewayEmbeddingProvider::fetch(
    const std::string& model, const std::vector<std::string>& texts) {
  auto res = client_.embed(model, texts);
  for (const auto& v : res.embeddings)
    if (res.dim > 0 && v.size() != static_cast<std::size_t>(res.dim))
      throw DimensionMismatch("gateway declared dim " + std::to_string(res.dim) +
                              " but sent a vector of length " + std::to_string(v.size()));
  return std::move(res.embeddings);
}

std::vector<std::vector<double>> HashingEmbeddingProvider::fetch(
    const std::string& model, const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v(dim_, 0.0);
    v[0] = 0.25;  // keeps token-free texts away from the zero vector
    std::string word;
    auto flush = [&] {
      if (word.size() > 2) {
        const auto h = hash64(0x656d62ULL, model + "\x1f" + word);
        v[h % dim_] += (h >> 63) != 0U ? -1.0 : 1.0;
      }
      word.clear();
    };
    for (const char c : text) {
      if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
        word.push_back(c);
      } else if (c >= 'A' && c <= 'Z') {
        word.push_back(static_cast<char>(c - 'A' + 'a'));
      } else {
        flush();
      }
    }
    flush();
    out.push_back(std::move(v));
  }
  return out;
}

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {}

EmbeddingCache EmbeddingCache::open(const std::filesystem::path& path) {
  EmbeddingCache cache(path);
  if (!std::filesystem::exists(path)) return cache;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding cache " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      auto values = j.at("values").get<std::vector<double>>();
      const auto dim = j.at("dim").get<std::size_t>();
      if (values.size() != dim)
        throw SchemaError("dim field disagrees with the vector length");
      cache.insert(j.at("source_key").get<std::string>(), j.at("model").get<std::string>(),
                   std::move(values));
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cache.dirty_ = false;
  return cache;
}

const std::vector<double>* EmbeddingCache::find(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second.values;
}

void EmbeddingCache::insert(const std::string& key, const std::string& model,
                            std::vector<double> values) {
  if (values.empty()) throw DimensionMismatch("empty embedding vector");
  if (dim_ == 0) {
    dim_ = values.size();
  } else if (values.size() != dim_) {
    throw DimensionMismatch("embedding of dimension " + std::to_string(values.size()) +
                            " does not match cache dimension " + std::to_string(dim_));
  }
  entries_[key] = Entry{model, std::move(values)};
  dirty_ = true;
}

void EmbeddingCache::save() const {
  if (path_.empty()) throw IoError("embedding cache has no backing file");
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  auto tmp = path_;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    for (const auto& [key, e] : entries_) {
      const json j{{"source_key", key}, {"model", e.model}, {"dim", e.values.size()}, {"values", e.values}};
      out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path_);
}

std::size_t EmbeddingCache::size() const { return entries_.size(); }

std::vector<EmbeddingVector> embed_texts(EmbeddingProvider* provider, EmbeddingCache& cache,
                                         const std::vector<std::string>& texts,
                                         const EmbedOptions& options) {
  std::vector<std::string> keys;
  keys.reserve(texts.size());
  std::vector<std::string> missing_texts;
  std::vector<std::string> missing_keys;
  std::unordered_map<std::string, bool> queued;
  for (const auto& t : texts) {
    keys.push_back(embedding_key(options.model, t));
    if (cache.find(keys.back()) == nullptr && !queued[keys.back()]) {
      queued[keys.back()] = true;
      missing_texts.push_back(t);
      missing_keys.push_back(keys.back());
    }
  }

  if (!missing_texts.empty()) {
    if (options.offline || provider == nullptr)
      throw CacheMiss(std::to_string(missing_texts.size()) +
                      " text(s) missing from embedding cache in offline mode (first key " +
                      missing_keys.front() + ")");
    const auto batch = std::max<std::size_t>(1, options.batch_size);
    for (std::size_t start = 0; start < missing_texts.size(); start += batch) {
      const auto end = std::min(missing_texts.size(), start + batch);
      const std::vector<std::string> chunk(missing_texts.begin() + static_cast<std::ptrdiff_t>(start),
                                           missing_texts.begin() + static_cast<std::ptrdiff_t>(end));
      auto vecs = provider->fetch(options.model, chunk);
      if (vecs.size() != chunk.size())
        throw DimensionMismatch("provider returned " + std::to_string(vecs.size()) +
                                " vectors for " + std::to_string(chunk.size()) + " texts");
      for (std::size_t i = 0; i < vecs.size(); ++i)
        cache.insert(missing_keys[start + i], options.model, normalize(vecs[i]));
    }
  }

  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (auto& key : keys) {
    const auto* v = cache.find(key);
    const double norm = std::sqrt(kernels::dot(*v, *v));
    if (std::abs(norm - 1.0) > kNormTolerance)
      throw SchemaError("cached embedding " + key + " has norm " + std::to_string(norm));
    out.push_back(EmbeddingVector{*v, std::move(key)});
  }
  return out;
}

}  // namespace poolrank
