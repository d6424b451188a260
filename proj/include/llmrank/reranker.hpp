#pragma once

#include "llmrank/gateway.hpp"
#include "llmrank/prompting.hpp"
#include "llmrank/retrieval.hpp"
#include "llmrank/types.hpp"

#include <optional>
#include <vector>

namespace llmrank {

enum class RerankMode { pointwise, pairwise, listwise, hybrid };

const char* mode_name(RerankMode mode);
RerankMode mode_from_name(const std::string& name);

struct RerankConfig {
  int k = 5;        // final list length
  int k_prime = 10; // candidate count
  double c1 = 0.05;
  double c2 = 0.5;
  double c3 = 0.025;
  double alpha1 = 1.0 / 3.0;
  double alpha2 = 1.0 / 3.0;
  double alpha3 = 1.0 / 3.0;
  RerankMode mode = RerankMode::hybrid;
  int listwise_shuffles = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-candidate utilities. Absent pointwise/listwise components fall back
/// to the retrieval term and zero respectively when fused.
struct UtilityVector {
  ItemId item = kNoItem;
  int m = 0;  // 1-based retrieval position
  double u_retrieval = 0.0;
  std::optional<double> u_pointwise;
  double u_pairwise = 0.0;
  std::optional<double> u_listwise;
  double u_hybrid = 0.0;
};

struct RerankResult {
  UserId user = kNoUser;
  std::vector<ItemId> final_order;       // permutation of the candidate list
  std::vector<UtilityVector> utilities;  // in retrieval order
  int call_count = 0;
  int parse_failures = 0;  // responses that yielded no utility (parse or transport)
  bool degraded = false;   // every call failed at the transport level

  std::vector<ItemId> top_k(int k) const {
    return {final_order.begin(),
            final_order.begin() + std::min<std::size_t>(final_order.size(),
                                                        static_cast<std::size_t>(k))};
  }
};

/// U_retrieval for 1-based position m.
inline double retrieval_utility(int m, double c1) { return -static_cast<double>(m) * c1; }

/// k disjoint (top-position, after-position) index pairs: a uniformly random
/// matching between positions [0, k) and [k, k'). When fewer than k
/// after-positions exist, partners repeat (draws with replacement).
std::vector<std::pair<int, int>> pairwise_pairs(int k_prime, int k, std::uint64_t seed);

/// Fills u_hybrid on every entry (linear interpolation with fallbacks) and
/// returns the hybrid scores in the same order.
std::vector<double> hybrid_combine(std::vector<UtilityVector>& utilities,
                                   const RerankConfig& config);

/// Runs the configured ranking tasks for one user's candidate list and sorts
/// candidates by the mode's utility (stable, retrieval order breaks ties).
RerankResult rerank_user(UserId user, const CandidateList& candidates, Backend& backend,
                         const PromptBuilder& builder, const FactorModel* rating_model,
                         const FactorModel* ranking_model, const RerankConfig& config,
                         const CompletionParams& params,
                         std::vector<TranscriptEntry>* transcript = nullptr);

void write_utilities(const std::filesystem::path& path, const Dataset& ds,
                     const std::vector<RerankResult>& results);
void write_rerank_results(const std::filesystem::path& path, const Dataset& ds,
                          const std::vector<RerankResult>& results);

/// (user, rank, item) records back into per-user item orderings.
std::vector<std::pair<UserId, std::vector<ItemId>>> read_rerank_results(
    const std::filesystem::path& path, const Dataset& ds);

}  // namespace llmrank
