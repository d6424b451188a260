#include "llmrank/synthetic.hpp"

#include "llmrank/rng.hpp"
#include "llmrank/strings.hpp"
#include "llmrank/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

namespace llmrank {

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config) {
  Rng rng(derive_seed(config.seed, "synthetic-corpus"));
  const int d = config.latent_dim;

  Matrix archetypes(config.archetypes, d);
  for (Eigen::Index a = 0; a < archetypes.rows(); ++a) {
    for (int c = 0; c < d; ++c) archetypes(a, c) = rng.uniform(-1.0, 1.0);
  }
  Matrix user_pref(config.users, d);
  Vector user_offset(config.users);
  for (int u = 0; u < config.users; ++u) {
    const auto a = rng.below(static_cast<std::uint64_t>(config.archetypes));
    for (int c = 0; c < d; ++c) {
      user_pref(u, c) = archetypes(static_cast<Eigen::Index>(a), c) + rng.uniform(-0.3, 0.3);
    }
    user_offset(u) = rng.uniform(-0.6, 0.6);
  }
  Matrix item_attr(config.items, d);
  Vector item_offset(config.items);
  std::vector<double> popularity(static_cast<std::size_t>(config.items));
  for (int i = 0; i < config.items; ++i) {
    for (int c = 0; c < d; ++c) item_attr(i, c) = rng.uniform(-1.0, 1.0);
    item_offset(i) = rng.uniform(-0.6, 0.6);
    popularity[static_cast<std::size_t>(i)] = 1.0 / static_cast<double>(i + 10);
  }

  SyntheticCorpus out;
  out.catalog.reserve(static_cast<std::size_t>(config.items));
  for (int i = 0; i < config.items; ++i) {
    char title[32];
    std::snprintf(title, sizeof(title), "Movie %04d", i + 1);
    out.catalog.push_back(ItemMeta{std::to_string(i + 1), title,
                                   {{"f2", "genre-" + std::to_string(i % 7)}}});
  }

  const double mid = 0.5 * (1.0 + static_cast<double>(config.scale_max));
  const double span = 0.5 * (static_cast<double>(config.scale_max) - 1.0);
  for (int u = 0; u < config.users; ++u) {
    const int n = config.min_interactions +
                  static_cast<int>(rng.below(static_cast<std::uint64_t>(
                      config.max_interactions - config.min_interactions + 1)));
    // affinity-weighted item stream without repeats
    std::vector<double> weights(static_cast<std::size_t>(config.items));
    for (int i = 0; i < config.items; ++i) {
      const double affinity = user_pref.row(u).dot(item_attr.row(i)) / d;
      weights[static_cast<std::size_t>(i)] =
          popularity[static_cast<std::size_t>(i)] * std::exp(3.0 * affinity);
    }
    std::unordered_set<int> chosen;
    std::int64_t ts = 1'000'000 + static_cast<std::int64_t>(rng.below(1000));
    for (int k = 0; k < n && static_cast<int>(chosen.size()) < config.items; ++k) {
      std::vector<double> w = weights;
      for (const int c : chosen) w[static_cast<std::size_t>(c)] = 0.0;
      Rng draw_rng(rng.next_u64());
      const auto i = static_cast<int>(weighted_draws(w, 1, draw_rng)[0]);
      chosen.insert(i);

      const double affinity =
          user_pref.row(u).dot(item_attr.row(i)) / d + 0.5 * (user_offset(u) + item_offset(i));
      const double noisy =
          mid + span * affinity + rng.uniform(-config.rating_noise, config.rating_noise);
      const double rating = std::clamp(std::round(noisy), 1.0, static_cast<double>(config.scale_max));
      ts += 50 + static_cast<std::int64_t>(rng.below(5000));
      out.interactions.push_back(RawInteraction{std::to_string(u + 1), std::to_string(i + 1),
                                                rating, ts});
    }
  }
  return out;
}

void write_synthetic_files(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "ratings.tsv");
    if (!out) throw UsageError("cannot write ratings.tsv under " + dir.string());
    for (const auto& r : corpus.interactions) {
      out << r.user << "\t" << r.item << "\t" << format_double(r.rating) << "\t" << r.timestamp
          << "\n";
    }
  }
  {
    std::ofstream out(dir / "catalog.txt");
    if (!out) throw UsageError("cannot write catalog.txt under " + dir.string());
    for (const auto& m : corpus.catalog) {
      out << m.external_id << "|" << m.title;
      for (const auto& [k, v] : m.attributes) out << "|" << v;
      out << "\n";
    }
  }
}

}  // namespace llmrank
