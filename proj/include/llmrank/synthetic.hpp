#pragma once

#include "llmrank/corpus.hpp"

#include <filesystem>

namespace llmrank {

/// Deterministic synthetic rating corpus with latent preference structure:
/// users belong to taste archetypes, items carry latent attribute vectors,
/// and each user's interaction stream is drawn affinity-weighted, so both
/// rating prediction and next-item retrieval are learnable.
struct SyntheticConfig {
  int users = 500;
  int items = 200;
  int latent_dim = 4;
  int archetypes = 4;
  int min_interactions = 15;
  int max_interactions = 40;
  double rating_noise = 0.7;
  int scale_max = 5;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  std::vector<RawInteraction> interactions;
  std::vector<ItemMeta> catalog;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config);

/// Writes ratings.tsv (tab-separated) and catalog.txt (pipe-separated).
void write_synthetic_files(const std::filesystem::path& dir, const SyntheticCorpus& corpus);

}  // namespace llmrank
