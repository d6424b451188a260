#include "llmrank/pipeline.hpp"
#include "llmrank/synthetic.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int run(int argc, char** argv) {
  CLI::App app{"offline toolkit for LLM-assisted top-k recommendation reranking"};
  app.require_subcommand(1);
  app.set_config("--config")->description("configuration file (ini sections per stage)");
  app.allow_config_extras(true);

  llmrank::PipelineConfig cfg;
  std::string rerank_mode = "hybrid";
  std::string eval_ks = "3,5";

  // run
  app.add_option("--seed,--run.seed", cfg.seed, "pipeline seed (mandatory)")->required();
  app.add_option("--out,--run.out", cfg.out_dir, "output directory");
  app.add_option("--jobs,--run.jobs", cfg.jobs, "worker threads for per-user stages");
  app.add_flag("--force,--run.force", cfg.force, "overwrite existing artifacts");
  app.add_option("--ks,--run.eval_ks", eval_ks, "comma-separated k values for evaluation");

  // data
  app.add_option("--ratings,--data.ratings", cfg.ratings_path, "ratings file");
  app.add_option("--catalog,--data.catalog", cfg.catalog_path, "item catalog file");
  app.add_option("--data.ratings_delimiter", cfg.ratings_delimiter,
                 "field delimiter in the ratings file (e.g. \"\\t\" or ::)");
  app.add_option("--data.catalog_delimiter", cfg.catalog_delimiter,
                 "field delimiter in the catalog file");
  app.add_option("--scale-max,--data.scale_max", cfg.scale_max, "rating scale upper bound");
  app.add_flag("--data.synthesize_timestamps", cfg.synthesize_timestamps,
               "draw timestamps under the seed when the file has none");
  app.add_option("--k-core,--data.k_core", cfg.k_core, "k-core filter threshold (1 = off)");

  // retrieval
  app.add_option("--retrieval.d", cfg.rating_mf.d, "latent dimension");
  app.add_option("--retrieval.learning_rate", cfg.rating_mf.learning_rate, "SGD step size");
  app.add_option("--retrieval.regularization", cfg.rating_mf.regularization, "L2 strength");
  app.add_option("--retrieval.epochs", cfg.rating_mf.epochs, "training epochs");
  app.add_option("--retrieval.negatives", cfg.rating_mf.negatives_per_positive,
                 "sampled negatives per positive (ranking model)");

  // sampling
  app.add_option("--sampling.n_target", cfg.sampling.n_target, "draws per strategy");
  app.add_option("--sampling.clusters", cfg.sampling.clusters, "k-means cluster count");
  app.add_option("--sampling.penalty", cfg.sampling.penalty,
                 "repetition penalty base, in (0, 1)");

  // instructions
  app.add_option("--instructions.per_task", cfg.instructions.per_task,
                 "records per ranking task");
  app.add_option("--instructions.k_prime", cfg.instructions.k_prime,
                 "candidate items per training prompt");
  app.add_option("--instructions.liked", cfg.instructions.composition.liked,
                 "liked items per candidate set");
  app.add_option("--instructions.disliked", cfg.instructions.composition.disliked,
                 "disliked items per candidate set");
  app.add_option("--instructions.negatives", cfg.instructions.composition.negatives,
                 "negative items per candidate set");
  app.add_option("--instructions.max_history", cfg.instructions.max_history_items,
                 "history titles per liked/disliked group");
  app.add_flag("!--instructions.no_hints", cfg.instructions.include_hints,
               "disable conventional-model hint sentences");
  app.add_option("--templates,--instructions.templates", cfg.templates_path,
                 "prompt template file (defaults are built in)");

  // rerank
  app.add_option("--rerank.k", cfg.rerank.k, "final recommendation list length");
  app.add_option("--rerank.k_prime", cfg.rerank.k_prime, "retrieval candidate count");
  app.add_option("--rerank.c1", cfg.rerank.c1, "retrieval position constant");
  app.add_option("--rerank.c2", cfg.rerank.c2, "pairwise win constant");
  app.add_option("--rerank.c3", cfg.rerank.c3, "listwise position constant");
  app.add_option("--rerank.alpha1", cfg.rerank.alpha1, "pointwise weight");
  app.add_option("--rerank.alpha2", cfg.rerank.alpha2, "pairwise weight");
  app.add_option("--rerank.alpha3", cfg.rerank.alpha3, "listwise weight");
  app.add_option("--mode,--rerank.mode", rerank_mode,
                 "pointwise | pairwise | listwise | hybrid");
  app.add_option("--rerank.listwise_shuffles", cfg.rerank.listwise_shuffles,
                 "shuffled listwise presentations to average");

  // gateway
  app.add_option("--backend,--gateway.backend", cfg.backend, "oracle | remote | replay");
  app.add_option("--epsilon,--gateway.epsilon", cfg.oracle_epsilon,
                 "oracle noise rate in [0, 1]");
  app.add_option("--gateway.base_url", cfg.remote.base_url, "chat completion server");
  app.add_option("--gateway.path", cfg.remote.path, "chat completion endpoint path");
  app.add_option("--gateway.model", cfg.remote.model, "model name sent in requests");
  app.add_option("--gateway.api_key_env", cfg.remote.api_key_env,
                 "environment variable holding the bearer token");
  app.add_option("--gateway.max_attempts", cfg.remote.max_attempts, "retry budget");
  app.add_option("--gateway.backoff_ms", cfg.remote.backoff_ms, "first retry delay");
  app.add_option("--gateway.timeout_s", cfg.remote.timeout_s, "per-request timeout");
  app.add_option("--gateway.max_in_flight", cfg.remote.max_in_flight,
                 "bound on concurrent remote requests");
  app.add_option("--gateway.temperature", cfg.decoding.temperature, "decoding temperature");
  app.add_option("--gateway.top_p", cfg.decoding.top_p, "decoding top-p");
  app.add_option("--gateway.top_k", cfg.decoding.top_k, "decoding top-k");
  app.add_option("--gateway.max_tokens", cfg.decoding.max_tokens, "response token cap");

  auto* ingest = app.add_subcommand("ingest", "parse, filter and split the rating corpus");
  auto* train = app.add_subcommand("train-retrieval", "train the rating and ranking models");
  auto* build = app.add_subcommand("build-instructions",
                                   "sample users and emit the instruction dataset");
  auto* rerank = app.add_subcommand("rerank", "rerank retrieval candidates via the gateway");
  auto* evaluate = app.add_subcommand("evaluate", "score rerank results against held items");
  auto* synth = app.add_subcommand("synth", "generate a synthetic demo corpus");

  llmrank::SyntheticConfig syn;
  std::string synth_dir = "data/synthetic";
  synth->add_option("--dir", synth_dir, "directory for ratings.tsv and catalog.txt");
  synth->add_option("--users", syn.users, "user count");
  synth->add_option("--items", syn.items, "item count");
  synth->add_option("--min-interactions", syn.min_interactions, "per-user minimum");
  synth->add_option("--max-interactions", syn.max_interactions, "per-user maximum");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  cfg.ranking_mf = cfg.rating_mf;
  cfg.rerank.mode = llmrank::mode_from_name(rerank_mode);
  cfg.eval_ks.clear();
  for (const auto& part : llmrank::split(eval_ks, ",")) {
    cfg.eval_ks.push_back(std::stoi(part));
  }
  cfg.instructions.k_prime = cfg.rerank.k_prime;

  if (synth->parsed()) {
    syn.seed = cfg.seed;
    syn.scale_max = cfg.scale_max;
    llmrank::write_synthetic_files(synth_dir, llmrank::make_synthetic_corpus(syn));
    std::cout << "wrote " << synth_dir << "/ratings.tsv and catalog.txt\n";
    return 0;
  }
  if (ingest->parsed()) llmrank::cmd_ingest(cfg, std::cout);
  if (train->parsed()) llmrank::cmd_train_retrieval(cfg, std::cout);
  if (build->parsed()) llmrank::cmd_build_instructions(cfg, std::cout);
  if (rerank->parsed()) llmrank::cmd_rerank(cfg, std::cout);
  if (evaluate->parsed()) llmrank::cmd_evaluate(cfg, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const llmrank::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
