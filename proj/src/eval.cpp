#include "llmrank/eval.hpp"

#include "llmrank/strings.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace llmrank {

std::optional<int> rank_of_ground_truth(const std::vector<ItemId>& order, ItemId held) {
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] == held) return static_cast<int>(i) + 1;
  }
  return std::nullopt;
}

double hit_ratio(const std::vector<std::optional<int>>& ranks, int k) {
  if (ranks.empty()) throw UsageError("hit ratio over an empty population is undefined");
  std::size_t hits = 0;
  for (const auto& r : ranks) {
    if (r && *r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double ndcg(const std::vector<std::optional<int>>& ranks, int k, bool printed_form) {
  if (ranks.empty()) throw UsageError("ndcg over an empty population is undefined");
  double sum = 0.0;
  for (const auto& r : ranks) {
    if (r && *r <= k) {
      sum += printed_form ? 1.0 : 1.0 / std::log2(static_cast<double>(*r) + 1.0);
    }
  }
  return sum / static_cast<double>(ranks.size());
}

MetricReport compute_metrics(const std::vector<std::vector<ItemId>>& orders,
                             const std::vector<ItemId>& held, const std::vector<int>& ks,
                             bool printed_form) {
  if (orders.size() != held.size()) throw UsageError("orders and held items disagree in size");
  std::vector<std::optional<int>> ranks, hit_ranks;
  ranks.reserve(orders.size());
  for (std::size_t i = 0; i < orders.size(); ++i) {
    ranks.push_back(rank_of_ground_truth(orders[i], held[i]));
    if (ranks.back()) hit_ranks.push_back(ranks.back());
  }

  MetricReport rep;
  rep.ks = ks;
  rep.users = orders.size();
  rep.candidate_hit_rate = orders.empty() ? 0.0
                                          : static_cast<double>(hit_ranks.size()) /
                                                static_cast<double>(orders.size());
  for (const int k : ks) {
    rep.hr.push_back(hit_ratio(ranks, k));
    rep.ndcg.push_back(ndcg(ranks, k, printed_form));
    rep.hr_hit.push_back(hit_ranks.empty() ? 0.0 : hit_ratio(hit_ranks, k));
    rep.ndcg_hit.push_back(hit_ranks.empty() ? 0.0 : ndcg(hit_ranks, k, printed_form));
  }
  return rep;
}

std::string MetricReport::table(const std::string& label) const {
  std::ostringstream os;
  char buf[64];
  os << label << " (" << users << " users, candidate-hit rate ";
  std::snprintf(buf, sizeof(buf), "%.4f", candidate_hit_rate);
  os << buf << ")\n";
  for (std::size_t i = 0; i < ks.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "  H@%-2d %.4f  N@%-2d %.4f  (hit subset: H %.4f  N %.4f)\n",
                  ks[i], hr[i], ks[i], ndcg[i], hr_hit[i], ndcg_hit[i]);
    os << buf;
  }
  return os.str();
}

void MetricReport::write_kv(std::ostream& out, const std::string& prefix) const {
  out << prefix << ".users " << users << "\n";
  out << prefix << ".candidate_hit_rate " << format_double(candidate_hit_rate) << "\n";
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const std::string k = std::to_string(ks[i]);
    out << prefix << ".hr@" << k << " " << format_double(hr[i]) << "\n";
    out << prefix << ".ndcg@" << k << " " << format_double(ndcg[i]) << "\n";
    out << prefix << ".hr_hit@" << k << " " << format_double(hr_hit[i]) << "\n";
    out << prefix << ".ndcg_hit@" << k << " " << format_double(ndcg_hit[i]) << "\n";
  }
}

TransitionReport transition_analysis(const std::vector<std::vector<ItemId>>& before,
                                     const std::vector<std::vector<ItemId>>& after,
                                     const std::vector<ItemId>& held, int k) {
  if (before.size() != after.size() || before.size() != held.size()) {
    throw UsageError("transition analysis inputs disagree in size");
  }
  TransitionReport rep;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto rb = rank_of_ground_truth(before[i], held[i]);
    if (!rb) continue;  // held item not retrieved; reranking cannot reach it
    const auto ra = rank_of_ground_truth(after[i], held[i]);
    const bool ok_before = *rb <= k;
    const bool ok_after = ra && *ra <= k;
    ++rep.users;
    if (ok_before && ok_after) ++rep.r2r;
    else if (ok_before && !ok_after) ++rep.r2w;
    else if (!ok_before && ok_after) ++rep.w2r;
    else ++rep.w2w;
  }
  return rep;
}

std::string TransitionReport::table() const {
  std::ostringstream os;
  char buf[96];
  os << "transitions over " << users << " candidate-hit users\n";
  std::snprintf(buf, sizeof(buf), "  W2R %zu (%.4f)  R2W %zu (%.4f)  W2W %zu (%.4f)  R2R %zu (%.4f)\n",
                w2r, frac(w2r), r2w, frac(r2w), w2w, frac(w2w), r2r, frac(r2r));
  os << buf;
  return os.str();
}

void TransitionReport::write_kv(std::ostream& out, const std::string& prefix) const {
  out << prefix << ".users " << users << "\n";
  out << prefix << ".w2r " << w2r << "\n";
  out << prefix << ".r2w " << r2w << "\n";
  out << prefix << ".w2w " << w2w << "\n";
  out << prefix << ".r2r " << r2r << "\n";
}

}  // namespace llmrank
