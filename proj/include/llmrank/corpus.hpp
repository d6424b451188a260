#pragma once

#include "llmrank/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace llmrank {

/// One (user, item, rating, timestamp) record with external string ids,
/// as read from a ratings file before any indexing.
struct RawInteraction {
  std::string user;
  std::string item;
  double rating = 0.0;
  std::int64_t timestamp = 0;
};

/// Indexed interaction; user/item are contiguous internal ids.
struct Interaction {
  UserId user = kNoUser;
  ItemId item = kNoItem;
  double rating = 0.0;
  std::int64_t timestamp = 0;
};

struct ItemMeta {
  std::string external_id;
  std::string title;
  std::vector<std::pair<std::string, std::string>> attributes;
};

struct ParseOptions {
  std::string delimiter = "\t";  // "::" for the double-colon variant
  int scale_max = 5;
  bool synthesize_timestamps = false;  // for corpora without timestamps
  std::uint64_t seed = 0;
};

/// Reads a ratings file (user, item, rating, timestamp per line). Duplicate
/// (user, item) pairs keep the record with the latest timestamp. Throws
/// UsageError with the line number on malformed lines and on ratings outside
/// [1, scale_max]. With synthesize_timestamps, the fourth field is optional
/// and missing timestamps are drawn uniformly under the seed.
std::vector<RawInteraction> parse_interactions(const std::filesystem::path& path,
                                               const ParseOptions& opts);

/// Reads an item catalog: id and title as the first two fields. Any further
/// fields are stored as ("f<index>", value) attribute pairs.
std::vector<ItemMeta> parse_catalog(const std::filesystem::path& path,
                                    const std::string& delimiter = "|");

/// Iteratively removes users and items with fewer than k interactions until
/// both minimum degrees are >= k. Throws UsageError if nothing survives.
std::vector<RawInteraction> apply_k_core(std::vector<RawInteraction> interactions, int k);

/// Immutable indexed corpus. Internal ids are assigned in natural order of
/// the external ids (numeric when both sides parse as integers, lexicographic
/// otherwise), so identical inputs always index identically.
struct Dataset {
  std::vector<Interaction> interactions;
  std::vector<std::string> user_ids;  // internal -> external
  std::vector<ItemMeta> items;        // internal -> meta (catalog joined)
  int scale_max = 5;
  std::uint64_t seed = 0;

  std::unordered_map<std::string, UserId> user_index;
  std::unordered_map<std::string, ItemId> item_index;

  std::size_t user_count() const { return user_ids.size(); }
  std::size_t item_count() const { return items.size(); }
  double density() const {
    if (user_ids.empty() || items.empty()) return 0.0;
    return static_cast<double>(interactions.size()) /
           (static_cast<double>(user_ids.size()) * static_cast<double>(items.size()));
  }
  const std::string& title_of(ItemId i) const { return items[static_cast<std::size_t>(i)].title; }
};

/// Builds the indexed dataset from raw interactions plus an optional catalog.
/// Items referenced by interactions but absent from the catalog get a
/// synthetic "Item <id>" title so downstream prompting is total.
Dataset build_dataset(const std::vector<RawInteraction>& interactions,
                      const std::vector<ItemMeta>& catalog, int scale_max, std::uint64_t seed);

/// Leave-one-out split. Per user the latest interaction goes to test, the
/// second latest to validation and the rest to train; timestamp ties break
/// by ascending item id. Users with fewer than three interactions are
/// dropped and counted in skipped_users.
struct SplitDataset {
  Dataset train;  // catalog and id tables retained, interactions = train only
  std::map<UserId, Interaction> validation;
  std::map<UserId, Interaction> test;
  int skipped_users = 0;

  /// Train interactions grouped per user, each ascending by (timestamp, item).
  const std::vector<std::vector<Interaction>>& histories() const { return histories_; }
  void rebuild_histories();

private:
  std::vector<std::vector<Interaction>> histories_;
};

SplitDataset leave_one_out_split(const Dataset& dataset);

/// Chronological train history of one user. Throws UsageError for a user
/// with no train interactions.
const std::vector<Interaction>& user_history(const SplitDataset& split, UserId user);

/// Rating threshold above which an interaction counts as "liked":
/// 4 on a 1-5 scale, 7 on a 1-10 scale.
double liked_threshold(int scale_max);

// --- canonical line-oriented serialization -------------------------------

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

void write_split(const std::filesystem::path& path, const SplitDataset& split);
SplitDataset read_split(const std::filesystem::path& path);

}  // namespace llmrank
