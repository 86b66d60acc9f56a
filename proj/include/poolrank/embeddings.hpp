#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace poolrank {

class GatewayClient;

struct EmbeddingVector {
  std::vector<double> values;
  std::string source_key;

  [[nodiscard]] std::size_t dim() const noexcept { return values.size(); }
  [[nodiscard]] std::span<const double> view() const noexcept { return values; }
};

inline constexpr double kNormTolerance = 1e-6;

/// Divides by the Euclidean norm. Throws ZeroVector.
[[nodiscard]] std::vector<double> normalize(std::span<const double> raw);

/// SHA-256 over (model, text).
[[nodiscard]] std::string embedding_key(const std::string& model, const std::string& text);

/// Source of raw (not necessarily normalised) vectors.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<std::vector<double>> fetch(const std::string& model,
                                                 const std::vector<std::string>& texts) = 0;
};

/// Calls gateway POST /embed.
class GatewayEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit GatewayEmbeddingProvider(GatewayClient& client) : client_(client) {}
  std::vector<std::vector<double>> fetch(const std::string& model,
                                         const std::vector<std::string>& texts) override;

 private:
  GatewayClient& client_;
};

/// Feature-hashed bag of content words. Deterministic and model-free; used
/// to build synthetic fixture caches and in tests, never as a stand-in for
/// a sentence encoder in real runs.
class HashingEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(std::size_t dim = 64) : dim_(dim) {}
  std::vector<std::vector<double>> fetch(const std::string& model,
                                         const std::vector<std::string>& texts) override;

 private:
  std::size_t dim_;
};

/// Line-delimited cache {source_key, model, dim, values}. Loaded fully in
/// memory; save() rewrites the file sorted by key via temp-then-rename.
/// Concurrent find() calls are safe; insert() needs a single writer.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(std::filesystem::path path);

  /// Loads `path` if it exists. Throws SchemaError / DimensionMismatch.
  static EmbeddingCache open(const std::filesystem::path& path);

  [[nodiscard]] const std::vector<double>* find(const std::string& key) const;
  /// Throws DimensionMismatch when `values` disagrees with the cache dimension.
  void insert(const std::string& key, const std::string& model, std::vector<double> values);
  void save() const;

  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] bool dirty() const noexcept { return dirty_; }
  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

 private:
  struct Entry {
    std::string model;
    std::vector<double> values;
  };
  std::filesystem::path path_;
  std::map<std::string, Entry> entries_;
  std::size_t dim_ = 0;
  bool dirty_ = false;
};

struct EmbedOptions {
  std::string model = "sentence-transformers/all-MiniLM-L6-v2";
  bool offline = true;
  std::size_t batch_size = 32;
};

/// One normalised vector per text, order-aligned. Cache first; misses are
/// CacheMiss when offline, otherwise fetched in batches and inserted.
[[nodiscard]] std::vector<EmbeddingVector> embed_texts(EmbeddingProvider* provider,
                                                       EmbeddingCache& cache,
                                                       const std::vector<std::string>& texts,
                                                       const EmbedOptions& options);

}  // namespace poolrank
