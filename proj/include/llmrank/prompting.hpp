#pragma once

#include "llmrank/corpus.hpp"
#include "llmrank/retrieval.hpp"
#include "llmrank/sampling.hpp"
#include "llmrank/types.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace llmrank {

enum class RankingTask { pointwise, pairwise, listwise };

const char* task_name(RankingTask task);
RankingTask task_from_name(const std::string& name);

/// Prompt wording lives in a key=value template file so it can change
/// without recompiling. Values may contain {placeholder} substitutions.
class Templates {
public:
  static Templates defaults();
  static Templates load(const std::filesystem::path& path);

  std::string render(const std::string& key,
                     const std::map<std::string, std::string>& subs) const;
  const std::string& raw(const std::string& key) const;

private:
  std::map<std::string, std::string> text_;
};

/// Task-dependent auxiliary signal from a conventional model, rendered into
/// the prompt as a natural-language sentence.
struct EnhancementHint {
  std::optional<double> rating;          // pointwise
  std::optional<ItemId> preferred;       // pairwise
  std::vector<ItemId> ranked;            // listwise
};

/// Hint for `items` (canonical order) from the available models; nullopt when
/// the needed model is missing.
std::optional<EnhancementHint> make_hint(RankingTask task, UserId user,
                                         const std::vector<ItemId>& items,
                                         const FactorModel* rating_model,
                                         const FactorModel* ranking_model);

/// Uniform random permutation of the items under the seed.
std::vector<ItemId> position_shift(std::vector<ItemId> items, std::uint64_t seed);

struct PromptRecord {
  RankingTask task = RankingTask::pointwise;
  UserId user = kNoUser;
  std::vector<ItemId> presented;              // order as shown in the text
  std::vector<std::string> presented_titles;  // parallel to presented
  std::string instruction;                    // task directive
  std::string input;                          // history + question + hint
  std::uint64_t shuffle_seed = 0;
  bool has_hint = false;

  std::string full_text() const { return instruction + "\n" + input; }
};

/// Renders prompts against one split with fixed wording and history bounds.
class PromptBuilder {
public:
  PromptBuilder(const SplitDataset& split, Templates templates, int max_history_items = 15)
      : split_(&split), templates_(std::move(templates)), max_history_(max_history_items) {}

  /// Two sentences listing the most recent liked and disliked titles, each
  /// group presented in seeded random order.
  std::string render_history(UserId user, std::uint64_t shuffle_seed) const;

  /// Candidate arity: 1 pointwise, 2 pairwise, any (>= 2) listwise.
  /// With shift_candidates = false the candidates are presented verbatim
  /// (the pairwise consistency protocol supplies both orders itself);
  /// history rendering is position-shifted either way.
  PromptRecord build(RankingTask task, UserId user, const std::vector<ItemId>& candidates,
                     const std::optional<EnhancementHint>& hint, std::uint64_t shuffle_seed,
                     bool shift_candidates = true) const;

  const SplitDataset& split() const { return *split_; }
  const Templates& templates() const { return templates_; }

private:
  const SplitDataset* split_;
  Templates templates_;
  int max_history_;
};

/// Target answer for a training prompt over `presented` entries (in shown
/// order). nullopt when the comparison is indeterminate (two negatives).
std::optional<std::string> make_training_target(RankingTask task,
                                                const std::vector<CandidateEntry>& presented,
                                                const Dataset& catalog, std::uint64_t seed);

struct InstructionRecord {
  std::string instruction;
  std::string input;
  std::string output;
  RankingTask task = RankingTask::pointwise;
  UserId user = kNoUser;
  std::vector<ItemId> items;  // presented order
  std::uint64_t shuffle_seed = 0;
};

struct InstructionConfig {
  int per_task = 100;
  int k_prime = 10;
  CandidateComposition composition;
  int max_history_items = 15;
  bool include_hints = true;
  std::uint64_t seed = 0;
};

struct InstructionBuildStats {
  std::map<std::string, int> requested;
  std::map<std::string, int> achieved;
  int duplicate_drops = 0;
  int short_history_drops = 0;
  int indeterminate_drops = 0;
};

/// Generates the tuning dataset over the sampled multiset: one prompt
/// instance per multiset occurrence (cycling when more are requested than
/// occurrences exist), dropping exact-duplicate texts and users with fewer
/// than three train interactions.
std::vector<InstructionRecord> build_instruction_dataset(
    const UserMultiset& users, const SplitDataset& split, const FactorModel* rating_model,
    const FactorModel* ranking_model, const Templates& templates,
    const InstructionConfig& config, InstructionBuildStats* stats = nullptr);

/// instruction/input/output records, one JSON object per line.
void write_instructions(const std::filesystem::path& path,
                        const std::vector<InstructionRecord>& records);

/// Sidecar metadata keyed by line number.
void write_instruction_meta(const std::filesystem::path& path, const Dataset& ds,
                            const std::vector<InstructionRecord>& records);

std::vector<InstructionRecord> read_instructions(const std::filesystem::path& records_path,
                                                 const std::filesystem::path& meta_path,
                                                 const Dataset& ds);

}  // namespace llmrank
