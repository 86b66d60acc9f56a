#pragma once

#include <exception>
#include <stdexcept>
#include <string>

namespace poolrank {

/// Base class for every error raised by the harness.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define POOLRANK_DEFINE_ERROR(Name)      \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

// corpus
POOLRANK_DEFINE_ERROR(MalformedRecord);
POOLRANK_DEFINE_ERROR(EmptySummary);
POOLRANK_DEFINE_ERROR(SchemaError);
POOLRANK_DEFINE_ERROR(IoError);

// rankers / gateway
POOLRANK_DEFINE_ERROR(InvalidRanking);
POOLRANK_DEFINE_ERROR(GatewayUnreachable);
POOLRANK_DEFINE_ERROR(MissingFixture);

class BackendError : public Error {
 public:
  BackendError(std::string model, int status, std::string detail)
      : Error("backend error for model '" + model + "' (HTTP " + std::to_string(status) +
              "): " + detail),
        model_(std::move(model)),
        status_(status) {}
  [[nodiscard]] const std::string& model() const noexcept { return model_; }
  [[nodiscard]] int status() const noexcept { return status_; }
  [[nodiscard]] bool throttled() const noexcept { return status_ == 429; }

 private:
  std::string model_;
  int status_;
};

// embeddings
POOLRANK_DEFINE_ERROR(ZeroVector);
POOLRANK_DEFINE_ERROR(CacheMiss);
POOLRANK_DEFINE_ERROR(DimensionMismatch);

// metrics
POOLRANK_DEFINE_ERROR(BudgetOutOfRange);
POOLRANK_DEFINE_ERROR(BudgetTooSmall);
POOLRANK_DEFINE_ERROR(NoSummarySentences);
POOLRANK_DEFINE_ERROR(LengthMismatch);

// stats / report
POOLRANK_DEFINE_ERROR(TooFewSamples);
POOLRANK_DEFINE_ERROR(MissingMetrics);
POOLRANK_DEFINE_ERROR(MissingAgreement);
POOLRANK_DEFINE_ERROR(MissingComparisons);

// runner
POOLRANK_DEFINE_ERROR(ConfigError);

/// Stage failure carrying the stage name and, when known, the offending
/// cluster and the original error.
class StageError : public Error {
 public:
  StageError(std::string stage, std::string cluster_id, const std::string& what,
             std::exception_ptr cause = nullptr)
      : Error("stage '" + stage + "'" +
              (cluster_id.empty() ? std::string{} : " (cluster " + cluster_id + ")") + ": " +
              what),
        stage_(std::move(stage)),
        cluster_id_(std::move(cluster_id)),
        cause_(std::move(cause)) {}
  [[nodiscard]] const std::string& stage() const noexcept { return stage_; }
  [[nodiscard]] const std::string& cluster_id() const noexcept { return cluster_id_; }
  /// Null when the stage itself detected the problem.
  [[nodiscard]] const std::exception_ptr& cause() const noexcept { return cause_; }

 private:
  std::string stage_;
  std::string cluster_id_;
  std::exception_ptr cause_;
};

#undef POOLRANK_DEFINE_ERROR

}  // namespace poolrank
