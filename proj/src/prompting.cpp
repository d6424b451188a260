#include "llmrank/prompting.hpp"

#include "llmrank/rng.hpp"
#include "llmrank/strings.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <unordered_set>

namespace llmrank {

using nlohmann::json;

const char* task_name(RankingTask task) {
  switch (task) {
    case RankingTask::pointwise: return "pointwise";
    case RankingTask::pairwise: return "pairwise";
    case RankingTask::listwise: return "listwise";
  }
  return "?";
}

RankingTask task_from_name(const std::string& name) {
  if (name == "pointwise") return RankingTask::pointwise;
  if (name == "pairwise") return RankingTask::pairwise;
  if (name == "listwise") return RankingTask::listwise;
  throw UsageError("unknown ranking task '" + name + "'");
}

Templates Templates::defaults() {
  Templates t;
  t.text_ = {
      {"history",
       "The user previously liked the following items: {liked}. "
       "The user previously disliked the following items: {disliked}."},
      {"pointwise.instruction",
       "Predict the rating the user would give the candidate item on a scale of 1 to "
       "{scale_max}. Reply with a single number."},
      {"pointwise.question", "How would the user rate \"{candidate}\"?"},
      {"pairwise.instruction",
       "Decide which of the two candidate items the user would prefer. Reply \"Yes.\" if the "
       "user would prefer the first item over the second, otherwise reply \"No.\"."},
      {"pairwise.question", "Would the user prefer \"{candidate_1}\" over \"{candidate_2}\"?"},
      {"listwise.instruction",
       "Rank the candidate items from most preferred to least preferred for the user. Reply "
       "with the item titles in ranked order, separated by commas."},
      {"listwise.question", "How would the user rank the following candidate items: "
                            "{candidates}?"},
      {"hint.pointwise",
       "A conventional recommendation model predicts the user would rate \"{candidate}\" as "
       "{rating}."},
      {"hint.pairwise", "A conventional model prefers \"{candidate}\"."},
      {"hint.listwise", "A conventional model ranks the candidates as: {candidates}."},
  };
  return t;
}

Templates Templates::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open template file: " + path.string());
  Templates t = defaults();  // file entries override defaults key by key
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto pos = stripped.find('=');
    if (pos == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) +
                       ": expected key = value");
    }
    t.text_[trim(stripped.substr(0, pos))] = trim(stripped.substr(pos + 1));
  }
  return t;
}

const std::string& Templates::raw(const std::string& key) const {
  auto it = text_.find(key);
  if (it == text_.end()) throw UsageError("missing template key '" + key + "'");
  return it->second;
}

std::string Templates::render(const std::string& key,
                              const std::map<std::string, std::string>& subs) const {
  std::string out = raw(key);
  for (const auto& [name, value] : subs) {
    const std::string token = "{" + name + "}";
    std::size_t pos = 0;
    while ((pos = out.find(token, pos)) != std::string::npos) {
      out.replace(pos, token.size(), value);
      pos += value.size();
    }
  }
  return out;
}

std::optional<EnhancementHint> make_hint(RankingTask task, UserId user,
                                         const std::vector<ItemId>& items,
                                         const FactorModel* rating_model,
                                         const FactorModel* ranking_model) {
  EnhancementHint hint;
  switch (task) {
    case RankingTask::pointwise: {
      if (!rating_model || items.empty()) return std::nullopt;
      hint.rating = rating_model->predict_rating(user, items[0]);
      return hint;
    }
    case RankingTask::pairwise: {
      if (!ranking_model || items.size() != 2) return std::nullopt;
      const double s0 = ranking_model->score(user, items[0]);
      const double s1 = ranking_model->score(user, items[1]);
      hint.preferred = s0 > s1 || (s0 == s1 && items[0] < items[1]) ? items[0] : items[1];
      return hint;
    }
    case RankingTask::listwise: {
      if (!ranking_model || items.empty()) return std::nullopt;
      std::vector<std::pair<double, ItemId>> scored;
      scored.reserve(items.size());
      for (const ItemId i : items) scored.emplace_back(ranking_model->score(user, i), i);
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (const auto& [s, i] : scored) hint.ranked.push_back(i);
      return hint;
    }
  }
  return std::nullopt;
}

std::vector<ItemId> position_shift(std::vector<ItemId> items, std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(items);
  return items;
}

namespace {

std::string quoted_list(const Dataset& ds, const std::vector<ItemId>& items) {
  std::vector<std::string> parts;
  parts.reserve(items.size());
  for (const ItemId i : items) parts.push_back("\"" + ds.title_of(i) + "\"");
  return join(parts, ", ");
}

}  // namespace

std::string PromptBuilder::render_history(UserId user, std::uint64_t shuffle_seed) const {
  const auto& history = user_history(*split_, user);
  const Dataset& ds = split_->train;
  const double threshold = liked_threshold(ds.scale_max);

  std::vector<ItemId> liked, disliked;
  for (const auto& r : history) (r.rating >= threshold ? liked : disliked).push_back(r.item);

  // most recent first, capped per group
  auto recent = [this](std::vector<ItemId>& v) {
    std::reverse(v.begin(), v.end());
    if (v.size() > static_cast<std::size_t>(max_history_)) {
      v.resize(static_cast<std::size_t>(max_history_));
    }
  };
  recent(liked);
  recent(disliked);
  liked = position_shift(std::move(liked), mix_seed(shuffle_seed, fnv1a("history-liked")));
  disliked =
      position_shift(std::move(disliked), mix_seed(shuffle_seed, fnv1a("history-disliked")));

  return templates_.render(
      "history", {{"liked", liked.empty() ? "none" : quoted_list(ds, liked)},
                  {"disliked", disliked.empty() ? "none" : quoted_list(ds, disliked)}});
}

PromptRecord PromptBuilder::build(RankingTask task, UserId user,
                                  const std::vector<ItemId>& candidates,
                                  const std::optional<EnhancementHint>& hint,
                                  std::uint64_t shuffle_seed, bool shift_candidates) const {
  const std::size_t arity = candidates.size();
  if ((task == RankingTask::pointwise && arity != 1) ||
      (task == RankingTask::pairwise && arity != 2) ||
      (task == RankingTask::listwise && arity < 2)) {
    throw UsageError(std::string("wrong candidate count for ") + task_name(task) +
                     " prompt: " + std::to_string(arity));
  }
  const Dataset& ds = split_->train;

  PromptRecord rec;
  rec.task = task;
  rec.user = user;
  rec.shuffle_seed = shuffle_seed;
  rec.presented = shift_candidates
                      ? position_shift(candidates, mix_seed(shuffle_seed, fnv1a("candidates")))
                      : candidates;
  for (const ItemId i : rec.presented) rec.presented_titles.push_back(ds.title_of(i));

  std::string question;
  std::string hint_sentence;
  switch (task) {
    case RankingTask::pointwise: {
      question =
          templates_.render("pointwise.question", {{"candidate", rec.presented_titles[0]}});
      rec.instruction = templates_.render("pointwise.instruction",
                                          {{"scale_max", std::to_string(ds.scale_max)}});
      if (hint && hint->rating) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.1f", *hint->rating);
        hint_sentence = templates_.render(
            "hint.pointwise", {{"candidate", rec.presented_titles[0]}, {"rating", buf}});
      }
      break;
    }
    case RankingTask::pairwise: {
      question = templates_.render("pairwise.question",
                                   {{"candidate_1", rec.presented_titles[0]},
                                    {"candidate_2", rec.presented_titles[1]}});
      rec.instruction = templates_.render("pairwise.instruction", {});
      if (hint && hint->preferred) {
        hint_sentence = templates_.render("hint.pairwise",
                                          {{"candidate", ds.title_of(*hint->preferred)}});
      }
      break;
    }
    case RankingTask::listwise: {
      question = templates_.render("listwise.question",
                                   {{"candidates", quoted_list(ds, rec.presented)}});
      rec.instruction = templates_.render("listwise.instruction", {});
      if (hint && !hint->ranked.empty()) {
        hint_sentence =
            templates_.render("hint.listwise", {{"candidates", quoted_list(ds, hint->ranked)}});
      }
      break;
    }
  }

  rec.input = render_history(user, shuffle_seed) + " " + question;
  if (!hint_sentence.empty()) {
    rec.input += " " + hint_sentence;
    rec.has_hint = true;
  }
  return rec;
}

std::optional<std::string> make_training_target(RankingTask task,
                                                const std::vector<CandidateEntry>& presented,
                                                const Dataset& catalog, std::uint64_t seed) {
  // negatives rank below any observed rating
  auto key = [](const CandidateEntry& e) { return e.rating ? *e.rating : 0.0; };

  switch (task) {
    case RankingTask::pointwise: {
      if (presented.size() != 1 || !presented[0].rating) return std::nullopt;
      return format_double(*presented[0].rating) + ".";
    }
    case RankingTask::pairwise: {
      if (presented.size() != 2) return std::nullopt;
      if (!presented[0].rating && !presented[1].rating) return std::nullopt;
      return key(presented[0]) > key(presented[1]) ? std::string("Yes.") : std::string("No.");
    }
    case RankingTask::listwise: {
      std::vector<std::size_t> idx(presented.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      // rating descending, negatives last; ties by recency then a seeded draw
      std::vector<std::uint64_t> jitter(presented.size());
      Rng rng(seed);
      for (auto& j : jitter) j = rng.next_u64();
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (key(presented[a]) != key(presented[b])) {
          return key(presented[a]) > key(presented[b]);
        }
        if (presented[a].timestamp != presented[b].timestamp) {
          return presented[a].timestamp > presented[b].timestamp;
        }
        return jitter[a] < jitter[b];
      });
      std::vector<std::string> titles;
      titles.reserve(idx.size());
      for (const std::size_t i : idx) titles.push_back(catalog.title_of(presented[i].item));
      return join(titles, ", ");
    }
  }
  return std::nullopt;
}

namespace {

std::vector<const CandidateEntry*> entries_with_label(const TrainingCandidateSet& set,
                                                      CandidateLabel label) {
  std::vector<const CandidateEntry*> out;
  for (const auto& e : set.entries) {
    if (e.label == label) out.push_back(&e);
  }
  return out;
}

}  // namespace

std::vector<InstructionRecord> build_instruction_dataset(
    const UserMultiset& users, const SplitDataset& split, const FactorModel* rating_model,
    const FactorModel* ranking_model, const Templates& templates,
    const InstructionConfig& config, InstructionBuildStats* stats) {
  const std::vector<UserId> occurrences = users.expanded();
  if (occurrences.empty()) throw UsageError("empty sampled user multiset");

  PromptBuilder builder(split, templates, config.max_history_items);
  std::vector<InstructionRecord> records;
  std::unordered_set<std::string> seen_texts;
  InstructionBuildStats local;
  InstructionBuildStats& st = stats ? *stats : local;

  const RankingTask tasks[] = {RankingTask::pointwise, RankingTask::pairwise,
                               RankingTask::listwise};
  for (const RankingTask task : tasks) {
    const std::uint64_t task_seed = derive_seed(config.seed, task_name(task));
    st.requested[task_name(task)] = config.per_task;
    int achieved = 0;
    const long cap = std::max<long>(8L * config.per_task,
                                    2L * static_cast<long>(occurrences.size()));
    for (long attempt = 0; attempt < cap && achieved < config.per_task; ++attempt) {
      const UserId user = occurrences[static_cast<std::size_t>(attempt) % occurrences.size()];
      const std::uint64_t attempt_seed =
          mix_seed(task_seed, static_cast<std::uint64_t>(attempt));
      if (split.histories()[static_cast<std::size_t>(user)].size() < 3) {
        ++st.short_history_drops;
        continue;
      }
      const TrainingCandidateSet cands = select_training_candidates(
          split, user, config.k_prime, config.composition,
          mix_seed(attempt_seed, fnv1a("candidates")));

      // choose presented entries per task
      Rng pick(mix_seed(attempt_seed, fnv1a("pick")));
      std::vector<CandidateEntry> presented_entries;
      if (task == RankingTask::pointwise) {
        std::vector<const CandidateEntry*> rated;
        for (const auto& e : cands.entries) {
          if (e.rating) rated.push_back(&e);
        }
        if (rated.empty()) {
          ++st.indeterminate_drops;
          continue;
        }
        presented_entries.push_back(*rated[pick.below(rated.size())]);
      } else if (task == RankingTask::pairwise) {
        const auto liked = entries_with_label(cands, CandidateLabel::liked);
        const auto disliked = entries_with_label(cands, CandidateLabel::disliked);
        const auto negative = entries_with_label(cands, CandidateLabel::negative);
        std::vector<std::pair<const CandidateEntry*, const CandidateEntry*>> pools;
        if (!liked.empty() && !disliked.empty()) {
          pools.emplace_back(liked[pick.below(liked.size())],
                             disliked[pick.below(disliked.size())]);
        }
        if (!liked.empty() && !negative.empty()) {
          pools.emplace_back(liked[pick.below(liked.size())],
                             negative[pick.below(negative.size())]);
        }
        if (!disliked.empty() && !negative.empty()) {
          pools.emplace_back(disliked[pick.below(disliked.size())],
                             negative[pick.below(negative.size())]);
        }
        if (pools.empty()) {
          ++st.indeterminate_drops;
          continue;
        }
        const auto& [a, b] = pools[pick.below(pools.size())];
        presented_entries = {*a, *b};
      } else {
        presented_entries = cands.entries;
      }

      std::vector<ItemId> items;
      items.reserve(presented_entries.size());
      for (const auto& e : presented_entries) items.push_back(e.item);

      const auto hint =
          config.include_hints
              ? make_hint(task, user, items, rating_model, ranking_model)
              : std::nullopt;
      const PromptRecord prompt = builder.build(task, user, items, hint, attempt_seed);

      // build() shifts the presentation order; the target must follow it
      if (prompt.presented != items) {
        std::vector<CandidateEntry> reordered;
        reordered.reserve(presented_entries.size());
        for (const ItemId it : prompt.presented) {
          for (const auto& e : presented_entries) {
            if (e.item == it) reordered.push_back(e);
          }
        }
        presented_entries = std::move(reordered);
      }

      const auto target = make_training_target(task, presented_entries, split.train,
                                               mix_seed(attempt_seed, fnv1a("target")));
      if (!target) {
        ++st.indeterminate_drops;
        continue;
      }
      const std::string text = prompt.full_text();
      if (!seen_texts.insert(text).second) {
        ++st.duplicate_drops;
        continue;
      }
      InstructionRecord rec;
      rec.instruction = prompt.instruction;
      rec.input = prompt.input;
      rec.output = *target;
      rec.task = task;
      rec.user = user;
      rec.items = prompt.presented;
      rec.shuffle_seed = attempt_seed;
      records.push_back(std::move(rec));
      ++achieved;
    }
    st.achieved[task_name(task)] = achieved;
  }
  return records;
}

void write_instructions(const std::filesystem::path& path,
                        const std::vector<InstructionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  for (const auto& r : records) {
    json j;
    j["instruction"] = r.instruction;
    j["input"] = r.input;
    j["output"] = r.output;
    out << j.dump() << "\n";
  }
}

void write_instruction_meta(const std::filesystem::path& path, const Dataset& ds,
                            const std::vector<InstructionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  std::size_t line = 0;
  for (const auto& r : records) {
    json j;
    j["line"] = ++line;
    j["task"] = task_name(r.task);
    j["user"] = ds.user_ids[static_cast<std::size_t>(r.user)];
    json items = json::array();
    for (const ItemId i : r.items) items.push_back(ds.items[static_cast<std::size_t>(i)].external_id);
    j["items"] = items;
    j["shuffle_seed"] = r.shuffle_seed;
    out << j.dump() << "\n";
  }
}

std::vector<InstructionRecord> read_instructions(const std::filesystem::path& records_path,
                                                 const std::filesystem::path& meta_path,
                                                 const Dataset& ds) {
  std::ifstream rin(records_path);
  if (!rin) throw UsageError("cannot open " + records_path.string());
  std::ifstream min(meta_path);
  if (!min) throw UsageError("cannot open " + meta_path.string());

  std::vector<InstructionRecord> out;
  std::string rline, mline;
  while (std::getline(rin, rline)) {
    if (!std::getline(min, mline)) {
      throw UsageError("metadata sidecar shorter than instruction file");
    }
    const json jr = json::parse(rline);
    const json jm = json::parse(mline);
    InstructionRecord rec;
    rec.instruction = jr.at("instruction").get<std::string>();
    rec.input = jr.at("input").get<std::string>();
    rec.output = jr.at("output").get<std::string>();
    rec.task = task_from_name(jm.at("task").get<std::string>());
    rec.user = ds.user_index.at(jm.at("user").get<std::string>());
    for (const auto& ext : jm.at("items")) {
      rec.items.push_back(ds.item_index.at(ext.get<std::string>()));
    }
    rec.shuffle_seed = jm.at("shuffle_seed").get<std::uint64_t>();
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace llmrank
