#pragma once

#include "llmrank/corpus.hpp"
#include "llmrank/prompting.hpp"
#include "llmrank/retrieval.hpp"
#include "llmrank/types.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace llmrank {

struct CompletionParams {
  double temperature = 0.1;
  double top_p = 0.1;
  int top_k = 10;
  int max_tokens = 512;
};

/// What the prompt was about. The remote backend ignores this; the oracle
/// backend answers from it, and transcripts do not persist it.
struct PromptMeta {
  RankingTask task = RankingTask::pointwise;
  UserId user = kNoUser;
  std::vector<ItemId> items;               // presented order
  std::vector<std::string> titles;         // parallel to items
  std::uint64_t shuffle_seed = 0;
};

struct CompletionRequest {
  std::string text;
  PromptMeta meta;
};

class TransportError : public std::runtime_error {
public:
  explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

class ProtocolError : public std::runtime_error {
public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

class Backend {
public:
  virtual ~Backend() = default;

  std::string complete(const CompletionRequest& request, const CompletionParams& params) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_complete(request, params);
  }

  std::uint64_t call_count() const { return calls_.load(std::memory_order_relaxed); }
  void reset_call_count() { calls_.store(0, std::memory_order_relaxed); }

private:
  virtual std::string do_complete(const CompletionRequest& request,
                                  const CompletionParams& params) = 0;
  std::atomic<std::uint64_t> calls_{0};
};

// --- response parsers (pure, total: payload or nullopt) --------------------

/// First numeric token within [1, scale_max].
std::optional<double> parse_pointwise(const std::string& text, int scale_max);

enum class Preference { first, second };

/// Leading yes/no wins; otherwise exactly one of the two titles must appear.
std::optional<Preference> parse_pairwise(const std::string& text, const std::string& title1,
                                         const std::string& title2);

/// Greedy title matching (normalized, token-set overlap >= 0.6) in order of
/// appearance; unmatched candidates are appended in presented order. Invalid
/// when fewer than half the candidates match. Returns candidate indices in
/// predicted rank order.
std::optional<std::vector<int>> parse_listwise(const std::string& text,
                                               const std::vector<std::string>& titles);

// --- oracle backend ---------------------------------------------------------

/// Deterministic stand-in for the tuned model. At epsilon = 0 it answers
/// from the held-out split: the test item beats everything, observed train
/// ratings come next, and a rating model (when given) fills in the rest.
/// With probability epsilon per call the answer is replaced by a uniform
/// random draw for the task.
struct OracleConfig {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
};

class OracleBackend : public Backend {
public:
  OracleBackend(const SplitDataset& split, const FactorModel* rating_model,
                const OracleConfig& config);

  /// Ground-truth-flavoured rating used for all three tasks.
  double oracle_rating(UserId user, ItemId item) const;

private:
  std::string do_complete(const CompletionRequest& request,
                          const CompletionParams& params) override;

  const SplitDataset* split_;
  const FactorModel* rating_model_;
  OracleConfig config_;
  std::vector<std::map<ItemId, double>> train_ratings_;
  std::vector<ItemId> test_item_;
};

// --- remote chat-completion backend ----------------------------------------

struct RemoteConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  std::string api_key_env = "LLMRANK_API_KEY";
  int max_attempts = 3;
  int backoff_ms = 1000;  // doubles per retry
  int timeout_s = 60;
  int max_in_flight = 4;
};

/// POSTs {model, messages, decoding params} and returns the first choice's
/// message content. Transient failures (connect errors, 5xx, 429) are
/// retried with exponential backoff; other non-success statuses raise
/// ProtocolError with a body excerpt.
class RemoteBackend : public Backend {
public:
  explicit RemoteBackend(RemoteConfig config);
  ~RemoteBackend() override;

private:
  std::string do_complete(const CompletionRequest& request,
                          const CompletionParams& params) override;

  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// --- transcripts and replay -------------------------------------------------

struct TranscriptEntry {
  std::uint64_t id = 0;
  std::string prompt;
  std::string response;
};

void write_transcript(const std::filesystem::path& path,
                      const std::vector<TranscriptEntry>& entries);
std::vector<TranscriptEntry> read_transcript(const std::filesystem::path& path);

/// Re-serves a recorded transcript keyed by prompt text (FIFO per prompt),
/// for fully offline reruns. Unknown prompts raise ProtocolError.
class ReplayBackend : public Backend {
public:
  explicit ReplayBackend(const std::filesystem::path& transcript_path);

private:
  std::string do_complete(const CompletionRequest& request,
                          const CompletionParams& params) override;

  std::mutex mutex_;
  std::map<std::string, std::vector<std::string>> responses_;  // FIFO front = index 0
  std::map<std::string, std::size_t> cursor_;
};

}  // namespace llmrank
