#pragma once

#include "llmrank/corpus.hpp"
#include "llmrank/eval.hpp"
#include "llmrank/gateway.hpp"
#include "llmrank/prompting.hpp"
#include "llmrank/reranker.hpp"
#include "llmrank/retrieval.hpp"
#include "llmrank/sampling.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace llmrank {

/// One configuration drives every subcommand; artifacts of each stage are
/// persisted under out_dir so later stages can resume from them.
struct PipelineConfig {
  // data
  std::string ratings_path;
  std::string catalog_path;
  std::string ratings_delimiter = "\t";
  std::string catalog_delimiter = "|";
  int scale_max = 5;
  bool synthesize_timestamps = false;
  int k_core = 1;  // 10 for corpora that need the quality filter

  // retrieval
  MfConfig rating_mf;
  MfConfig ranking_mf;

  // sampling
  SamplingConfig sampling;

  // instructions
  InstructionConfig instructions;
  std::string templates_path;

  // rerank
  RerankConfig rerank;

  // gateway
  std::string backend = "oracle";  // oracle | remote | replay
  double oracle_epsilon = 0.0;
  RemoteConfig remote;
  CompletionParams decoding;

  // run
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int jobs = 1;
  bool force = false;
  std::vector<int> eval_ks = {3, 5};

  std::filesystem::path out(const std::string& name) const {
    return std::filesystem::path(out_dir) / name;
  }
};

// artifact file names under out_dir
inline constexpr const char* kSplitFile = "split.txt";
inline constexpr const char* kRatingModelFile = "model_rating.txt";
inline constexpr const char* kRankingModelFile = "model_ranking.txt";
inline constexpr const char* kSampleUsersFile = "sample_users.txt";
inline constexpr const char* kSamplingReportFile = "sampling_report.txt";
inline constexpr const char* kInstructionsFile = "instructions.jsonl";
inline constexpr const char* kInstructionsMetaFile = "instructions.meta.jsonl";
inline constexpr const char* kCandidatesFile = "candidates.txt";
inline constexpr const char* kRerankResultsFile = "rerank_results.txt";
inline constexpr const char* kUtilitiesFile = "utilities.txt";
inline constexpr const char* kTranscriptFile = "transcript.jsonl";
inline constexpr const char* kMetricsTextFile = "metrics.txt";
inline constexpr const char* kMetricsKvFile = "metrics.kv";
inline constexpr const char* kTransitionsTextFile = "transitions.txt";
inline constexpr const char* kTransitionsKvFile = "transitions.kv";

void cmd_ingest(const PipelineConfig& config, std::ostream& log);
void cmd_train_retrieval(const PipelineConfig& config, std::ostream& log);
void cmd_build_instructions(const PipelineConfig& config, std::ostream& log);
void cmd_rerank(const PipelineConfig& config, std::ostream& log);
void cmd_evaluate(const PipelineConfig& config, std::ostream& log);

}  // namespace llmrank
