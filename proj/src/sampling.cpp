#include "llmrank/sampling.hpp"

#include "llmrank/rng.hpp"
#include "llmrank/strings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_set>

namespace llmrank {

std::size_t UserMultiset::total_size() const {
  std::size_t n = 0;
  for (const auto& [u, m] : multiplicity) n += static_cast<std::size_t>(m);
  return n;
}

std::vector<UserId> UserMultiset::expanded() const {
  std::vector<UserId> out;
  out.reserve(total_size());
  for (const auto& [u, m] : multiplicity) {
    for (int i = 0; i < m; ++i) out.push_back(u);
  }
  return out;
}

UserMultiset multiset_sum(const UserMultiset& a, const UserMultiset& b) {
  UserMultiset out = a;
  for (const auto& [u, m] : b.multiplicity) out.multiplicity[u] += m;
  return out;
}

std::map<UserId, double> importance_weights(const SplitDataset& split, int* excluded) {
  std::map<UserId, double> weights;
  int skipped = 0;
  for (std::size_t u = 0; u < split.histories().size(); ++u) {
    const std::size_t q = split.histories()[u].size();
    if (q < 2) {
      if (q == 1) ++skipped;  // ln(1) = 0 would zero the weight
      continue;
    }
    weights[static_cast<UserId>(u)] = std::log(static_cast<double>(q));
  }
  if (excluded) *excluded = skipped;
  return weights;
}

std::map<UserId, double> normalize_probabilities(const std::map<UserId, double>& weights) {
  double total = 0.0;
  for (const auto& [u, w] : weights) total += w;
  if (total <= 0.0) throw UsageError("no positive sampling weights");
  std::map<UserId, double> out;
  for (const auto& [u, w] : weights) out[u] = w / total;
  return out;
}

namespace {

UserMultiset draw_multiset(const std::map<UserId, double>& weights, int n, std::uint64_t seed) {
  std::vector<UserId> users;
  std::vector<double> w;
  users.reserve(weights.size());
  w.reserve(weights.size());
  for (const auto& [u, wu] : weights) {
    users.push_back(u);
    w.push_back(wu);
  }
  Rng rng(seed);
  UserMultiset out;
  for (const std::size_t idx : weighted_draws(w, static_cast<std::size_t>(n), rng)) {
    out.add(users[idx]);
  }
  return out;
}

}  // namespace

UserMultiset importance_sampling(const SplitDataset& split, int n_target, std::uint64_t seed) {
  return draw_multiset(importance_weights(split), n_target, seed);
}

std::vector<int> cluster_users(const ConstMatrixRef& embeddings, int clusters,
                               std::uint64_t seed) {
  const auto n = embeddings.rows();
  if (clusters < 1) throw UsageError("cluster count must be >= 1");
  if (clusters > n) {
    throw UsageError("cluster count " + std::to_string(clusters) + " exceeds user count " +
                     std::to_string(n));
  }
  const auto K = static_cast<Eigen::Index>(clusters);

  Rng rng(seed);
  Matrix centers(K, embeddings.cols());
  // farthest-point seeding: random first center, then repeatedly the point
  // farthest from its nearest chosen center (ties to the lowest index)
  Vector nearest = Vector::Constant(n, std::numeric_limits<double>::infinity());
  Eigen::Index pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
  for (Eigen::Index c = 0; c < K; ++c) {
    centers.row(c) = embeddings.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d2 = (embeddings.row(i) - centers.row(c)).squaredNorm();
      nearest(i) = std::min(nearest(i), d2);
    }
    if (c + 1 < K) {
      Eigen::Index far = 0;
      for (Eigen::Index i = 1; i < n; ++i) {
        if (nearest(i) > nearest(far)) far = i;
      }
      pick = far;
    }
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  auto assign_all = [&]() {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d2 = (embeddings.row(i) - centers.row(0)).squaredNorm();
      for (Eigen::Index c = 1; c < K; ++c) {
        const double d2 = (embeddings.row(i) - centers.row(c)).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best = static_cast<int>(c);
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    return changed;
  };

  assign_all();
  for (int iter = 0; iter < 100; ++iter) {
    // repair empty clusters by splitting the largest
    std::vector<int> sizes(static_cast<std::size_t>(K), 0);
    for (const int a : assign) ++sizes[static_cast<std::size_t>(a)];
    for (Eigen::Index c = 0; c < K; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      const int largest = static_cast<int>(
          std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      Eigen::Index far = -1;
      double far_d2 = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (assign[static_cast<std::size_t>(i)] != largest) continue;
        const double d2 = (embeddings.row(i) - centers.row(largest)).squaredNorm();
        if (d2 > far_d2) {
          far_d2 = d2;
          far = i;
        }
      }
      centers.row(c) = embeddings.row(far);
      assign[static_cast<std::size_t>(far)] = static_cast<int>(c);
      --sizes[static_cast<std::size_t>(largest)];
      ++sizes[static_cast<std::size_t>(c)];
    }

    // recompute means
    Matrix sums = Matrix::Zero(K, embeddings.cols());
    std::vector<int> counts(static_cast<std::size_t>(K), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += embeddings.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (Eigen::Index c = 0; c < K; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
      }
    }
    if (!assign_all()) break;
  }
  return assign;
}

std::map<UserId, double> clustering_probabilities(const std::vector<int>& assignments) {
  if (assignments.empty()) throw UsageError("no cluster assignments");
  std::map<int, int> sizes;
  for (const int a : assignments) ++sizes[a];
  std::map<UserId, double> weights;
  for (std::size_t u = 0; u < assignments.size(); ++u) {
    weights[static_cast<UserId>(u)] = static_cast<double>(sizes[assignments[u]]);
  }
  return normalize_probabilities(weights);
}

UserMultiset clustering_sampling(const std::vector<int>& assignments, int n_target,
                                 std::uint64_t seed) {
  return draw_multiset(clustering_probabilities(assignments), n_target, seed);
}

std::map<UserId, double> penalty_probabilities(const UserMultiset& u3, double penalty) {
  if (!(penalty > 0.0 && penalty < 1.0)) {
    throw UsageError("penalty constant must lie strictly between 0 and 1");
  }
  std::map<UserId, double> weights;
  for (const auto& [u, m] : u3.multiplicity) {
    weights[u] = std::pow(penalty, static_cast<double>(m));
  }
  return normalize_probabilities(weights);
}

UserMultiset penalty_resampling(const UserMultiset& u3, int n_final, double penalty,
                                std::uint64_t seed) {
  return draw_multiset(penalty_probabilities(u3, penalty), n_final, seed);
}

TrainingCandidateSet select_training_candidates(const SplitDataset& split, UserId user,
                                                int k_prime,
                                                const CandidateComposition& composition,
                                                std::uint64_t seed) {
  const auto& history = user_history(split, user);
  const double threshold = liked_threshold(split.train.scale_max);

  std::vector<const Interaction*> liked, disliked;
  std::unordered_set<ItemId> seen;
  for (const auto& r : history) {
    seen.insert(r.item);
    (r.rating >= threshold ? liked : disliked).push_back(&r);
  }

  Rng rng(seed);
  TrainingCandidateSet out;
  out.user = user;

  auto draw_from = [&rng](std::vector<const Interaction*>& pool, int want,
                          CandidateLabel label, std::vector<CandidateEntry>& into) {
    rng.shuffle(pool);
    const int take = std::min<int>(want, static_cast<int>(pool.size()));
    for (int i = 0; i < take; ++i) {
      into.push_back(CandidateEntry{pool[static_cast<std::size_t>(i)]->item, label,
                                    pool[static_cast<std::size_t>(i)]->rating,
                                    pool[static_cast<std::size_t>(i)]->timestamp});
    }
    return take;
  };

  int want_liked = composition.liked;
  int want_disliked = composition.disliked;
  int want_neg = composition.negatives;
  const int budget = k_prime;
  if (want_liked + want_disliked + want_neg != budget) {
    throw UsageError("candidate composition does not sum to k'");
  }

  const int got_liked = draw_from(liked, want_liked, CandidateLabel::liked, out.entries);
  const int got_disliked =
      draw_from(disliked, want_disliked, CandidateLabel::disliked, out.entries);
  want_neg += (want_liked - got_liked) + (want_disliked - got_disliked);

  const auto n_items = static_cast<std::uint64_t>(split.train.item_count());
  if (seen.size() + static_cast<std::size_t>(want_neg) > n_items) {
    throw UsageError("not enough never-interacted items for negative sampling");
  }
  std::unordered_set<ItemId> taken;
  for (int i = 0; i < want_neg; ++i) {
    ItemId j = static_cast<ItemId>(rng.below(n_items));
    while (seen.count(j) > 0 || taken.count(j) > 0) {
      j = static_cast<ItemId>(rng.below(n_items));
    }
    taken.insert(j);
    out.entries.push_back(CandidateEntry{j, CandidateLabel::negative, std::nullopt, -1});
  }
  return out;
}

MultisetSummary summarize(const UserMultiset& ms) {
  MultisetSummary s;
  s.total = ms.total_size();
  s.distinct = ms.distinct_count();
  for (const auto& [u, m] : ms.multiplicity) {
    s.max_multiplicity = std::max(s.max_multiplicity, m);
    if (s.total > 0) {
      const double p = static_cast<double>(m) / static_cast<double>(s.total);
      s.entropy -= p * std::log2(p);
    }
  }
  return s;
}

void write_multiset(const std::filesystem::path& path, const Dataset& ds,
                    const UserMultiset& ms) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "#llmrank multiset v1\n";
  for (const auto& [u, m] : ms.multiplicity) {
    out << ds.user_ids[static_cast<std::size_t>(u)] << "\t" << m << "\n";
  }
}

UserMultiset read_multiset(const std::filesystem::path& path, const Dataset& ds) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open multiset file: " + path.string());
  UserMultiset out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, "\t");
    if (f.size() != 2) throw UsageError("malformed multiset line in " + path.string());
    out.add(ds.user_index.at(f[0]), std::atoi(f[1].c_str()));
  }
  return out;
}

}  // namespace llmrank
