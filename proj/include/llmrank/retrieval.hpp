#pragma once

#include "llmrank/corpus.hpp"
#include "llmrank/types.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace llmrank {

enum class ModelKind { rating, ranking };

struct MfConfig {
  int d = 64;
  double learning_rate = 0.01;
  double regularization = 0.02;
  int epochs = 30;
  int negatives_per_positive = 4;  // ranking objective only
  std::uint64_t seed = 0;
};

/// Latent-factor model. For the rating kind, scores are regularized
/// least-squares fits of explicit ratings; for the ranking kind they are
/// pairwise-preference scores trained with sampled negatives.
struct FactorModel {
  ModelKind kind = ModelKind::rating;
  int d = 0;
  int scale_max = 5;
  std::uint64_t seed = 0;
  double global_mean = 0.0;
  Matrix user_factors;  // |U| x d
  Matrix item_factors;  // |I| x d
  Vector user_bias;
  Vector item_bias;

  std::size_t user_count() const { return static_cast<std::size_t>(user_factors.rows()); }
  std::size_t item_count() const { return static_cast<std::size_t>(item_factors.rows()); }

  /// Raw utility score; unknown ids contribute nothing.
  double score(UserId u, ItemId i) const;

  /// Rating prediction clamped to [1, scale_max]; total over unknown ids.
  double predict_rating(UserId u, ItemId i) const;
};

struct TrainLog {
  std::vector<double> epoch_loss;
};

/// SGD on the regularized squared error of observed ratings. epochs == 0
/// yields the untrained model: zero factors and biases, global_mean from
/// the data. Throws std::runtime_error when the loss turns non-finite.
FactorModel train_rating_mf(const SplitDataset& split, const MfConfig& config,
                            TrainLog* log = nullptr);

/// Pairwise-preference SGD over sampled (positive, negative) item pairs.
FactorModel train_ranking_mf(const SplitDataset& split, const MfConfig& config,
                             TrainLog* log = nullptr);

struct CandidateList {
  UserId user = kNoUser;
  std::vector<ItemId> items;   // score-descending, ties by ascending item id
  std::vector<double> scores;  // parallel to items
  bool degenerate = false;     // fewer eligible items than requested
};

/// Top k' items by model score among items outside the user's train set.
CandidateList top_candidates(const FactorModel& model, const SplitDataset& split, UserId user,
                             int k_prime);

/// User embedding matrix (row order = internal user index).
inline const Matrix& user_embeddings(const FactorModel& model) { return model.user_factors; }

void write_model(const std::filesystem::path& path, const FactorModel& model);
FactorModel read_model(const std::filesystem::path& path);

void write_candidates(const std::filesystem::path& path, const Dataset& ds,
                      const std::vector<CandidateList>& lists);
std::vector<CandidateList> read_candidates(const std::filesystem::path& path, const Dataset& ds);

}  // namespace llmrank
