#pragma once

#include "llmrank/corpus.hpp"
#include "llmrank/types.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace llmrank {

/// 1-based position of the held item in the order, or nullopt when missing.
std::optional<int> rank_of_ground_truth(const std::vector<ItemId>& order, ItemId held);

/// Mean of 1(rank <= k) over the population; misses count as non-hits.
/// Throws UsageError on an empty population.
double hit_ratio(const std::vector<std::optional<int>>& ranks, int k);

/// Mean of 1/log2(rank + 1) for rank <= k, else 0 (single-relevant-item
/// discounted gain). With printed_form the contribution degenerates to the
/// plain indicator, matching the 2^1 - 1 over log2(1 + 1) reading.
double ndcg(const std::vector<std::optional<int>>& ranks, int k, bool printed_form = false);

struct MetricReport {
  std::vector<int> ks;
  std::vector<double> hr;        // parallel to ks, over all users
  std::vector<double> ndcg;      // parallel to ks, over all users
  std::vector<double> hr_hit;    // restricted to candidate-hit users
  std::vector<double> ndcg_hit;  // restricted to candidate-hit users
  std::size_t users = 0;
  double candidate_hit_rate = 0.0;

  std::string table(const std::string& label) const;
  void write_kv(std::ostream& out, const std::string& prefix) const;
};

/// Metrics over per-user orderings and held items (parallel vectors).
MetricReport compute_metrics(const std::vector<std::vector<ItemId>>& orders,
                             const std::vector<ItemId>& held, const std::vector<int>& ks,
                             bool printed_form = false);

/// Correctness transitions between two orderings of the same candidates,
/// restricted to users whose held item appears in the before-order.
/// "Correct" means the held item ranks within the top k.
struct TransitionReport {
  std::size_t users = 0;  // candidate-hit users only
  std::size_t w2r = 0, r2w = 0, w2w = 0, r2r = 0;

  double frac(std::size_t n) const {
    return users == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(users);
  }
  std::string table() const;
  void write_kv(std::ostream& out, const std::string& prefix) const;
};

TransitionReport transition_analysis(const std::vector<std::vector<ItemId>>& before,
                                     const std::vector<std::vector<ItemId>>& after,
                                     const std::vector<ItemId>& held, int k);

}  // namespace llmrank
