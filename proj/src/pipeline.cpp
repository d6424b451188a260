#include "llmrank/pipeline.hpp"

#include "llmrank/rng.hpp"
#include "llmrank/strings.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

namespace llmrank {

namespace {

void require_absent_or_force(const PipelineConfig& config,
                             const std::filesystem::path& path) {
  if (!config.force && std::filesystem::exists(path)) {
    throw UsageError(path.string() + " already exists; pass --force to overwrite");
  }
}

void require_present(const std::filesystem::path& path, const std::string& producer) {
  if (!std::filesystem::exists(path)) {
    throw UsageError(path.string() + " is missing; run `" + producer + "` first");
  }
}

/// Index-parallel map with a fixed thread count; results land by index, so
/// output order does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const int threads = std::max(1, jobs);
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

std::unique_ptr<Backend> make_backend(const PipelineConfig& config, const SplitDataset& split,
                                      const FactorModel* rating_model) {
  if (config.backend == "oracle") {
    return std::make_unique<OracleBackend>(
        split, rating_model, OracleConfig{config.oracle_epsilon,
                                          derive_seed(config.seed, "oracle")});
  }
  if (config.backend == "remote") {
    return std::make_unique<RemoteBackend>(config.remote);
  }
  if (config.backend == "replay") {
    return std::make_unique<ReplayBackend>(config.out(kTranscriptFile));
  }
  throw UsageError("unknown gateway backend '" + config.backend + "'");
}

}  // namespace

void cmd_ingest(const PipelineConfig& config, std::ostream& log) {
  if (config.ratings_path.empty()) throw UsageError("data.ratings path is required");
  std::filesystem::create_directories(config.out_dir);
  const auto split_path = config.out(kSplitFile);
  require_absent_or_force(config, split_path);

  ParseOptions opts;
  opts.delimiter = config.ratings_delimiter;
  opts.scale_max = config.scale_max;
  opts.synthesize_timestamps = config.synthesize_timestamps;
  opts.seed = derive_seed(config.seed, "ingest");

  auto rows = parse_interactions(config.ratings_path, opts);
  if (config.k_core > 1) rows = apply_k_core(std::move(rows), config.k_core);

  std::vector<ItemMeta> catalog;
  if (!config.catalog_path.empty()) {
    catalog = parse_catalog(config.catalog_path, config.catalog_delimiter);
  }
  const Dataset dataset = build_dataset(rows, catalog, config.scale_max, config.seed);
  const SplitDataset split = leave_one_out_split(dataset);
  write_split(split_path, split);

  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu users, %zu items, %zu ratings, density %.6f",
                dataset.user_count(), dataset.item_count(), dataset.interactions.size(),
                dataset.density());
  log << "corpus: " << buf << "\n";
  log << "split: " << split.train.interactions.size() << " train, " << split.validation.size()
      << " validation, " << split.test.size() << " test";
  if (split.skipped_users > 0) {
    log << " (" << split.skipped_users << " users skipped: fewer than 3 interactions)";
  }
  log << "\n" << "wrote " << split_path.string() << "\n";
}

void cmd_train_retrieval(const PipelineConfig& config, std::ostream& log) {
  const auto split_path = config.out(kSplitFile);
  require_present(split_path, "ingest");
  const SplitDataset split = read_split(split_path);

  MfConfig rating_cfg = config.rating_mf;
  rating_cfg.seed = derive_seed(config.seed, "train-rating");
  MfConfig ranking_cfg = config.ranking_mf;
  ranking_cfg.seed = derive_seed(config.seed, "train-ranking");

  TrainLog rating_log, ranking_log;
  const FactorModel rating = train_rating_mf(split, rating_cfg, &rating_log);
  const FactorModel ranking = train_ranking_mf(split, ranking_cfg, &ranking_log);
  write_model(config.out(kRatingModelFile), rating);
  write_model(config.out(kRankingModelFile), ranking);

  auto summarize_loss = [&log](const char* name, const TrainLog& tl) {
    if (tl.epoch_loss.empty()) {
      log << name << ": untrained (epochs = 0)\n";
      return;
    }
    log << name << ": " << tl.epoch_loss.size() << " epochs, loss "
        << format_double(tl.epoch_loss.front()) << " -> "
        << format_double(tl.epoch_loss.back()) << "\n";
  };
  summarize_loss("rating-mf", rating_log);
  summarize_loss("ranking-mf", ranking_log);
  log << "wrote " << config.out(kRatingModelFile).string() << ", "
      << config.out(kRankingModelFile).string() << "\n";
}

void cmd_build_instructions(const PipelineConfig& config, std::ostream& log) {
  const auto split_path = config.out(kSplitFile);
  require_present(split_path, "ingest");
  require_present(config.out(kRatingModelFile), "train-retrieval");
  require_present(config.out(kRankingModelFile), "train-retrieval");

  const SplitDataset split = read_split(split_path);
  const FactorModel rating = read_model(config.out(kRatingModelFile));
  const FactorModel ranking = read_model(config.out(kRankingModelFile));

  const UserMultiset u1 = importance_sampling(split, config.sampling.n_target,
                                              derive_seed(config.seed, "sampling-importance"));
  const auto assignments =
      cluster_users(user_embeddings(ranking), config.sampling.clusters,
                    derive_seed(config.seed, "sampling-cluster"));
  const UserMultiset u2 = clustering_sampling(assignments, config.sampling.n_target,
                                              derive_seed(config.seed, "sampling-clustering"));
  const UserMultiset u3 = multiset_sum(u1, u2);
  const UserMultiset u_ins =
      penalty_resampling(u3, config.sampling.n_target, config.sampling.penalty,
                         derive_seed(config.seed, "sampling-penalty"));
  write_multiset(config.out(kSampleUsersFile), split.train, u_ins);

  {
    std::ofstream report(config.out(kSamplingReportFile));
    auto line = [&report](const char* name, const UserMultiset& ms) {
      const MultisetSummary s = summarize(ms);
      report << name << ": total " << s.total << ", distinct " << s.distinct
             << ", max multiplicity " << s.max_multiplicity << ", entropy "
             << format_double(s.entropy) << "\n";
    };
    line("importance (U1)", u1);
    line("clustering (U2)", u2);
    line("combined (U3)", u3);
    line("final (U_ins)", u_ins);
  }

  InstructionConfig icfg = config.instructions;
  icfg.seed = derive_seed(config.seed, "instructions");
  const Templates templates = config.templates_path.empty()
                                  ? Templates::defaults()
                                  : Templates::load(config.templates_path);
  InstructionBuildStats stats;
  const auto records =
      build_instruction_dataset(u_ins, split, &rating, &ranking, templates, icfg, &stats);
  write_instructions(config.out(kInstructionsFile), records);
  write_instruction_meta(config.out(kInstructionsMetaFile), split.train, records);

  for (const auto& [task, requested] : stats.requested) {
    log << task << ": " << stats.achieved.at(task) << "/" << requested << " records\n";
  }
  log << "filters: " << stats.duplicate_drops << " duplicate texts, "
      << stats.short_history_drops << " short-history occurrences, "
      << stats.indeterminate_drops << " indeterminate targets\n";
  log << "wrote " << config.out(kInstructionsFile).string() << " (+ metadata sidecar)\n";
}

void cmd_rerank(const PipelineConfig& config, std::ostream& log) {
  const auto split_path = config.out(kSplitFile);
  require_present(split_path, "ingest");
  require_present(config.out(kRankingModelFile), "train-retrieval");

  const SplitDataset split = read_split(split_path);
  const FactorModel ranking = read_model(config.out(kRankingModelFile));
  FactorModel rating;
  const FactorModel* rating_ptr = nullptr;
  if (std::filesystem::exists(config.out(kRatingModelFile))) {
    rating = read_model(config.out(kRatingModelFile));
    rating_ptr = &rating;
  }

  const auto backend = make_backend(config, split, rating_ptr);

  std::vector<UserId> users;
  for (const auto& [u, r] : split.test) users.push_back(u);

  std::vector<CandidateList> candidates(users.size());
  parallel_for(users.size(), config.jobs, [&](std::size_t i) {
    candidates[i] = top_candidates(ranking, split, users[i], config.rerank.k_prime);
  });
  write_candidates(config.out(kCandidatesFile), split.train, candidates);

  const Templates templates = config.templates_path.empty()
                                  ? Templates::defaults()
                                  : Templates::load(config.templates_path);
  const PromptBuilder builder(split, templates, config.instructions.max_history_items);

  RerankConfig rcfg = config.rerank;
  rcfg.seed = derive_seed(config.seed, "rerank");

  std::vector<RerankResult> results(users.size());
  std::vector<std::vector<TranscriptEntry>> transcripts(users.size());
  parallel_for(users.size(), config.jobs, [&](std::size_t i) {
    results[i] = rerank_user(users[i], candidates[i], *backend, builder, rating_ptr, &ranking,
                             rcfg, config.decoding, &transcripts[i]);
  });

  write_rerank_results(config.out(kRerankResultsFile), split.train, results);
  write_utilities(config.out(kUtilitiesFile), split.train, results);
  if (config.backend != "replay") {  // a replay run would truncate its own input
    std::vector<TranscriptEntry> merged;
    std::uint64_t id = 0;
    for (auto& t : transcripts) {
      for (auto& e : t) {
        e.id = ++id;
        merged.push_back(std::move(e));
      }
    }
    write_transcript(config.out(kTranscriptFile), merged);
  }

  std::size_t calls = 0, failures = 0, degraded = 0;
  for (const auto& r : results) {
    calls += static_cast<std::size_t>(r.call_count);
    failures += static_cast<std::size_t>(r.parse_failures);
    degraded += r.degraded ? 1u : 0u;
  }
  const int per_user_budget = config.rerank.k_prime + 2 * config.rerank.k +
                              config.rerank.listwise_shuffles;
  log << "reranked " << users.size() << " users in " << mode_name(rcfg.mode) << " mode: "
      << calls << " gateway calls (budget " << per_user_budget << "/user for hybrid), "
      << failures << " unusable responses, " << degraded << " degraded users\n";
  log << "wrote " << config.out(kRerankResultsFile).string() << ", "
      << config.out(kUtilitiesFile).string() << "\n";
}

void cmd_evaluate(const PipelineConfig& config, std::ostream& log) {
  const auto split_path = config.out(kSplitFile);
  require_present(split_path, "ingest");
  require_present(config.out(kCandidatesFile), "rerank");
  require_present(config.out(kRerankResultsFile), "rerank");

  const SplitDataset split = read_split(split_path);
  const auto candidate_lists = read_candidates(config.out(kCandidatesFile), split.train);
  const auto reranked = read_rerank_results(config.out(kRerankResultsFile), split.train);
  if (candidate_lists.size() != reranked.size()) {
    throw UsageError("candidates and rerank results cover different user sets");
  }

  std::vector<std::vector<ItemId>> before, after;
  std::vector<ItemId> held;
  for (std::size_t i = 0; i < candidate_lists.size(); ++i) {
    const UserId u = candidate_lists[i].user;
    if (reranked[i].first != u) {
      throw UsageError("candidates and rerank results disagree on user order");
    }
    auto it = split.test.find(u);
    if (it == split.test.end()) continue;
    before.push_back(candidate_lists[i].items);
    after.push_back(reranked[i].second);
    held.push_back(it->second.item);
  }
  if (held.empty()) throw UsageError("no test users to evaluate");

  const MetricReport base = compute_metrics(before, held, config.eval_ks);
  const MetricReport rer = compute_metrics(after, held, config.eval_ks);
  const TransitionReport trans = transition_analysis(before, after, held, config.rerank.k);

  {
    std::ofstream out(config.out(kMetricsTextFile));
    out << base.table("retrieval baseline");
    out << rer.table("reranked");
    for (std::size_t i = 0; i < config.eval_ks.size(); ++i) {
      const double gain =
          base.hr[i] > 0 ? (rer.hr[i] - base.hr[i]) / base.hr[i] * 100.0 : 0.0;
      char buf[96];
      std::snprintf(buf, sizeof(buf), "improvement H@%d: %+.2f%%\n", config.eval_ks[i], gain);
      out << buf;
    }
  }
  {
    std::ofstream out(config.out(kMetricsKvFile));
    base.write_kv(out, "baseline");
    rer.write_kv(out, "reranked");
  }
  {
    std::ofstream out(config.out(kTransitionsTextFile));
    out << trans.table();
  }
  {
    std::ofstream out(config.out(kTransitionsKvFile));
    trans.write_kv(out, "transition");
  }

  log << base.table("retrieval baseline") << rer.table("reranked") << trans.table();
  for (std::size_t i = 0; i < config.eval_ks.size(); ++i) {
    const double gain = base.hr[i] > 0 ? (rer.hr[i] - base.hr[i]) / base.hr[i] * 100.0 : 0.0;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "improvement H@%d: %+.2f%%\n", config.eval_ks[i], gain);
    log << buf;
  }
  log << "wrote " << config.out(kMetricsTextFile).string() << ", "
      << config.out(kTransitionsTextFile).string() << "\n";
}

}  // namespace llmrank
