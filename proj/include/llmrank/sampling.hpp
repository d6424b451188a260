#pragma once

#include "llmrank/corpus.hpp"
#include "llmrank/types.hpp"

#include <map>
#include <optional>
#include <vector>

namespace llmrank {

/// Multiset of users: distinct elements plus a positive multiplicity each.
struct UserMultiset {
  std::map<UserId, int> multiplicity;

  std::size_t distinct_count() const { return multiplicity.size(); }
  std::size_t total_size() const;
  int count(UserId u) const {
    auto it = multiplicity.find(u);
    return it == multiplicity.end() ? 0 : it->second;
  }
  void add(UserId u, int n = 1) { multiplicity[u] += n; }

  /// Occurrence list: each user repeated multiplicity times, ascending ids.
  std::vector<UserId> expanded() const;
};

UserMultiset multiset_sum(const UserMultiset& a, const UserMultiset& b);

struct SamplingConfig {
  int n_target = 1000;   // draws per strategy and for the final selection
  int clusters = 10;     // K
  double penalty = 0.92; // C in (0,1)
  std::uint64_t seed = 0;
};

/// Importance of each user with >= 2 train interactions: w_u = ln(q_u).
/// Users with fewer interactions are excluded and counted.
std::map<UserId, double> importance_weights(const SplitDataset& split, int* excluded = nullptr);

/// Normalized selection probabilities from arbitrary positive weights.
std::map<UserId, double> normalize_probabilities(const std::map<UserId, double>& weights);

/// n_target independent draws with replacement under the importance law.
UserMultiset importance_sampling(const SplitDataset& split, int n_target, std::uint64_t seed);

/// K-means over user embedding rows: farthest-point seeding under the seed,
/// Lloyd iterations to an assignment fixpoint (at most 100), empty clusters
/// repaired by splitting the largest. Returns one cluster id per row.
std::vector<int> cluster_users(const ConstMatrixRef& embeddings, int clusters,
                               std::uint64_t seed);

/// Per-user probability proportional to the size of the user's cluster.
std::map<UserId, double> clustering_probabilities(const std::vector<int>& assignments);

UserMultiset clustering_sampling(const std::vector<int>& assignments, int n_target,
                                 std::uint64_t seed);

/// Penalty law over the underlying set of u3: psi_u = C^{M3(u)}. The
/// probabilities are computed once from M3 and held fixed across draws.
std::map<UserId, double> penalty_probabilities(const UserMultiset& u3, double penalty);

UserMultiset penalty_resampling(const UserMultiset& u3, int n_final, double penalty,
                                std::uint64_t seed);

// --- training-time candidate item selection -------------------------------

enum class CandidateLabel { liked, disliked, negative };

struct CandidateEntry {
  ItemId item = kNoItem;
  CandidateLabel label = CandidateLabel::negative;
  std::optional<double> rating;       // observed entries only
  std::int64_t timestamp = -1;        // observed entries only
};

struct TrainingCandidateSet {
  UserId user = kNoUser;
  std::vector<CandidateEntry> entries;
};

struct CandidateComposition {
  int liked = 3;
  int disliked = 3;
  int negatives = 4;
};

/// Draws k' candidate items for a training prompt: random liked and disliked
/// items from the user's history plus never-interacted negatives; shortfall
/// in either rated class is backfilled with extra negatives.
TrainingCandidateSet select_training_candidates(const SplitDataset& split, UserId user,
                                                int k_prime,
                                                const CandidateComposition& composition,
                                                std::uint64_t seed);

/// Distribution summary of a sampled multiset (entropy over occurrences,
/// distinct count, max multiplicity), for the sampling report.
struct MultisetSummary {
  std::size_t total = 0;
  std::size_t distinct = 0;
  int max_multiplicity = 0;
  double entropy = 0.0;
};

MultisetSummary summarize(const UserMultiset& ms);

void write_multiset(const std::filesystem::path& path, const Dataset& ds,
                    const UserMultiset& ms);
UserMultiset read_multiset(const std::filesystem::path& path, const Dataset& ds);

}  // namespace llmrank
