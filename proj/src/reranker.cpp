#include "llmrank/reranker.hpp"

#include "llmrank/rng.hpp"
#include "llmrank/strings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace llmrank {

const char* mode_name(RerankMode mode) {
  switch (mode) {
    case RerankMode::pointwise: return "pointwise";
    case RerankMode::pairwise: return "pairwise";
    case RerankMode::listwise: return "listwise";
    case RerankMode::hybrid: return "hybrid";
  }
  return "?";
}

RerankMode mode_from_name(const std::string& name) {
  if (name == "pointwise") return RerankMode::pointwise;
  if (name == "pairwise") return RerankMode::pairwise;
  if (name == "listwise") return RerankMode::listwise;
  if (name == "hybrid") return RerankMode::hybrid;
  throw UsageError("unknown rerank mode '" + name + "'");
}

void RerankConfig::validate() const {
  if (k < 1 || k_prime <= k) throw UsageError("rerank requires 1 <= k < k'");
  if (listwise_shuffles < 1) throw UsageError("listwise_shuffles must be >= 1");
  const double asum = alpha1 + alpha2 + alpha3;
  if (std::abs(asum - 1.0) > 1e-9) {
    throw UsageError("utility weights must sum to 1, got " + format_double(asum));
  }
  if (alpha1 < 0 || alpha2 < 0 || alpha3 < 0) {
    throw UsageError("utility weights must be non-negative");
  }
  if (c1 < 0 || c2 < 0 || c3 < 0) throw UsageError("utility constants must be non-negative");
}

std::vector<std::pair<int, int>> pairwise_pairs(int k_prime, int k, std::uint64_t seed) {
  if (k < 1 || k_prime <= k) throw UsageError("pairwise pairs require 1 <= k < k'");
  std::vector<int> afters;
  for (int i = k; i < k_prime; ++i) afters.push_back(i);

  Rng rng(seed);
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(k));
  if (static_cast<int>(afters.size()) >= k) {
    rng.shuffle(afters);
    for (int i = 0; i < k; ++i) pairs.emplace_back(i, afters[static_cast<std::size_t>(i)]);
  } else {
    for (int i = 0; i < k; ++i) {
      pairs.emplace_back(i, afters[rng.below(afters.size())]);
    }
  }
  return pairs;
}

std::vector<double> hybrid_combine(std::vector<UtilityVector>& utilities,
                                   const RerankConfig& config) {
  std::vector<double> out;
  out.reserve(utilities.size());
  for (auto& u : utilities) {
    const double point = u.u_pointwise ? *u.u_pointwise : u.u_retrieval;
    const double list = u.u_listwise ? *u.u_listwise : 0.0;
    u.u_hybrid = config.alpha1 * point + config.alpha2 * u.u_pairwise + config.alpha3 * list;
    out.push_back(u.u_hybrid);
  }
  return out;
}

namespace {

PromptMeta meta_of(const PromptRecord& prompt) {
  return PromptMeta{prompt.task, prompt.user, prompt.presented, prompt.presented_titles,
                    prompt.shuffle_seed};
}

struct CallOutcome {
  std::optional<std::string> response;
  bool transport_failure = false;
};

CallOutcome issue(Backend& backend, const PromptRecord& prompt, const CompletionParams& params,
                  int& call_count, std::vector<TranscriptEntry>* transcript) {
  CompletionRequest request{prompt.full_text(), meta_of(prompt)};
  ++call_count;
  try {
    std::string response = backend.complete(request, params);
    if (transcript) {
      transcript->push_back(TranscriptEntry{static_cast<std::uint64_t>(call_count),
                                            request.text, response});
    }
    return CallOutcome{std::move(response), false};
  } catch (const TransportError&) {
    return CallOutcome{std::nullopt, true};
  } catch (const ProtocolError&) {
    return CallOutcome{std::nullopt, true};
  }
}

}  // namespace

RerankResult rerank_user(UserId user, const CandidateList& candidates, Backend& backend,
                         const PromptBuilder& builder, const FactorModel* rating_model,
                         const FactorModel* ranking_model, const RerankConfig& config,
                         const CompletionParams& params,
                         std::vector<TranscriptEntry>* transcript) {
  config.validate();
  const auto& items = candidates.items;
  const int n = static_cast<int>(items.size());
  const int scale_max = builder.split().train.scale_max;

  RerankResult result;
  result.user = user;
  result.utilities.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& u = result.utilities[static_cast<std::size_t>(i)];
    u.item = items[static_cast<std::size_t>(i)];
    u.m = i + 1;
    u.u_retrieval = retrieval_utility(i + 1, config.c1);
  }
  if (n == 0) {
    result.degraded = true;
    return result;
  }

  const std::uint64_t user_seed =
      mix_seed(config.seed, mix_seed(static_cast<std::uint64_t>(user), fnv1a("rerank-user")));
  int transport_failures = 0;

  const bool want_point =
      config.mode == RerankMode::pointwise || config.mode == RerankMode::hybrid;
  const bool want_pair =
      config.mode == RerankMode::pairwise || config.mode == RerankMode::hybrid;
  const bool want_list =
      config.mode == RerankMode::listwise || config.mode == RerankMode::hybrid;

  if (want_point) {
    for (int i = 0; i < n; ++i) {
      auto& u = result.utilities[static_cast<std::size_t>(i)];
      const std::vector<ItemId> single{u.item};
      const auto hint =
          make_hint(RankingTask::pointwise, user, single, rating_model, ranking_model);
      const PromptRecord prompt =
          builder.build(RankingTask::pointwise, user, single, hint,
                        mix_seed(user_seed, fnv1a("pointwise") + static_cast<std::uint64_t>(i)));
      const CallOutcome outcome = issue(backend, prompt, params, result.call_count, transcript);
      if (outcome.transport_failure) ++transport_failures;
      const auto rating =
          outcome.response ? parse_pointwise(*outcome.response, scale_max) : std::nullopt;
      if (rating) {
        u.u_pointwise = u.u_retrieval + *rating;
      } else {
        ++result.parse_failures;
      }
    }
  }

  if (want_pair && n > config.k) {
    const auto pairs =
        pairwise_pairs(n, config.k, mix_seed(user_seed, fnv1a("pairwise-matching")));
    int pair_index = 0;
    for (const auto& [top_pos, after_pos] : pairs) {
      const ItemId a = items[static_cast<std::size_t>(top_pos)];
      const ItemId b = items[static_cast<std::size_t>(after_pos)];
      // order-independent hint, computed once per pair
      const auto hint =
          make_hint(RankingTask::pairwise, user, {a, b}, rating_model, ranking_model);

      std::optional<ItemId> winner[2];
      bool parsed[2] = {false, false};
      for (int round = 0; round < 2; ++round) {
        const std::vector<ItemId> presented =
            round == 0 ? std::vector<ItemId>{a, b} : std::vector<ItemId>{b, a};
        const PromptRecord prompt = builder.build(
            RankingTask::pairwise, user, presented, hint,
            mix_seed(user_seed, fnv1a("pairwise") +
                                    static_cast<std::uint64_t>(pair_index * 2 + round)),
            /*shift_candidates=*/false);
        const CallOutcome outcome =
            issue(backend, prompt, params, result.call_count, transcript);
        if (outcome.transport_failure) ++transport_failures;
        const auto pref = outcome.response
                              ? parse_pairwise(*outcome.response, prompt.presented_titles[0],
                                               prompt.presented_titles[1])
                              : std::nullopt;
        if (pref) {
          parsed[round] = true;
          winner[round] = *pref == Preference::first ? prompt.presented[0] : prompt.presented[1];
        } else {
          ++result.parse_failures;
        }
      }
      // only position-consistent answers carry utility
      if (parsed[0] && parsed[1] && winner[0] == winner[1]) {
        for (auto& u : result.utilities) {
          if (u.item == *winner[0]) u.u_pairwise = config.c2;
        }
      }
      ++pair_index;
    }
  }

  if (want_list) {
    std::vector<double> sum(static_cast<std::size_t>(n), 0.0);
    int valid_shuffles = 0;
    const auto hint = make_hint(RankingTask::listwise, user, items, rating_model, ranking_model);
    for (int s = 0; s < config.listwise_shuffles; ++s) {
      const PromptRecord prompt =
          builder.build(RankingTask::listwise, user, items, hint,
                        mix_seed(user_seed, fnv1a("listwise") + static_cast<std::uint64_t>(s)));
      const CallOutcome outcome = issue(backend, prompt, params, result.call_count, transcript);
      if (outcome.transport_failure) ++transport_failures;
      const auto order =
          outcome.response ? parse_listwise(*outcome.response, prompt.presented_titles)
                           : std::nullopt;
      if (!order) {
        ++result.parse_failures;
        continue;
      }
      ++valid_shuffles;
      for (int rank = 0; rank < n; ++rank) {
        const ItemId item = prompt.presented[static_cast<std::size_t>((*order)[rank])];
        for (int i = 0; i < n; ++i) {
          if (items[static_cast<std::size_t>(i)] == item) {
            sum[static_cast<std::size_t>(i)] += -static_cast<double>(rank + 1) * config.c3;
          }
        }
      }
    }
    if (valid_shuffles > 0) {
      for (int i = 0; i < n; ++i) {
        result.utilities[static_cast<std::size_t>(i)].u_listwise =
            sum[static_cast<std::size_t>(i)] / valid_shuffles;
      }
    }
  }

  hybrid_combine(result.utilities, config);

  std::vector<double> key(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& u = result.utilities[static_cast<std::size_t>(i)];
    switch (config.mode) {
      case RerankMode::pointwise: key[i] = u.u_pointwise ? *u.u_pointwise : u.u_retrieval; break;
      case RerankMode::pairwise: key[i] = u.u_pairwise; break;
      case RerankMode::listwise: key[i] = u.u_listwise ? *u.u_listwise : 0.0; break;
      case RerankMode::hybrid: key[i] = u.u_hybrid; break;
    }
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&key](int a, int b) { return key[static_cast<std::size_t>(a)] >
                                                 key[static_cast<std::size_t>(b)]; });
  result.final_order.reserve(static_cast<std::size_t>(n));
  for (const int i : order) result.final_order.push_back(items[static_cast<std::size_t>(i)]);

  result.degraded = result.call_count > 0 && transport_failures == result.call_count;
  return result;
}

void write_utilities(const std::filesystem::path& path, const Dataset& ds,
                     const std::vector<RerankResult>& results) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "#llmrank utilities v1\n";
  out << "#user\titem\tm\tu_retrieval\tu_pointwise\tu_pairwise\tu_listwise\tu_hybrid\n";
  auto opt = [](const std::optional<double>& v) {
    return v ? format_double_exact(*v) : std::string("-");
  };
  for (const auto& r : results) {
    for (const auto& u : r.utilities) {
      out << ds.user_ids[static_cast<std::size_t>(r.user)] << "\t"
          << ds.items[static_cast<std::size_t>(u.item)].external_id << "\t" << u.m << "\t"
          << format_double_exact(u.u_retrieval) << "\t" << opt(u.u_pointwise) << "\t"
          << format_double_exact(u.u_pairwise) << "\t" << opt(u.u_listwise) << "\t"
          << format_double_exact(u.u_hybrid) << "\n";
    }
  }
}

void write_rerank_results(const std::filesystem::path& path, const Dataset& ds,
                          const std::vector<RerankResult>& results) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "#llmrank rerank v1\n";
  for (const auto& r : results) {
    for (std::size_t rank = 0; rank < r.final_order.size(); ++rank) {
      out << ds.user_ids[static_cast<std::size_t>(r.user)] << "\t" << rank + 1 << "\t"
          << ds.items[static_cast<std::size_t>(r.final_order[rank])].external_id << "\n";
    }
  }
}

std::vector<std::pair<UserId, std::vector<ItemId>>> read_rerank_results(
    const std::filesystem::path& path, const Dataset& ds) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open rerank results: " + path.string());
  std::vector<std::pair<UserId, std::vector<ItemId>>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, "\t");
    if (f.size() < 3) throw UsageError("malformed rerank line in " + path.string());
    const UserId u = ds.user_index.at(f[0]);
    if (out.empty() || out.back().first != u) out.emplace_back(u, std::vector<ItemId>{});
    out.back().second.push_back(ds.item_index.at(f[2]));
  }
  return out;
}

}  // namespace llmrank
