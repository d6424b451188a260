#include "llmrank/gateway.hpp"

#include "llmrank/rng.hpp"
#include "llmrank/strings.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace llmrank {

using nlohmann::json;

// --- parsers ----------------------------------------------------------------

std::optional<double> parse_pointwise(const std::string& text, int scale_max) {
  const char* s = text.c_str();
  const char* end = s + text.size();
  while (s < end) {
    if (std::isdigit(static_cast<unsigned char>(*s))) {
      char* stop = nullptr;
      const double v = std::strtod(s, &stop);
      if (v >= 1.0 && v <= static_cast<double>(scale_max)) return v;
      s = stop;
    } else {
      ++s;
    }
  }
  return std::nullopt;
}

namespace {

/// Earliest token window whose overlap with the title's token set is >= 0.6;
/// npos when the title never matches.
std::size_t match_position(const std::vector<std::string>& text_tokens,
                           const std::vector<std::string>& title_toks) {
  if (title_toks.empty() || title_toks.size() > text_tokens.size()) {
    return std::string::npos;
  }
  const std::set<std::string> title_set(title_toks.begin(), title_toks.end());
  const std::size_t w = title_toks.size();
  for (std::size_t start = 0; start + w <= text_tokens.size(); ++start) {
    std::size_t hits = 0;
    std::set<std::string> counted;
    for (std::size_t i = 0; i < w; ++i) {
      const auto& tok = text_tokens[start + i];
      if (title_set.count(tok) > 0 && counted.insert(tok).second) ++hits;
    }
    if (static_cast<double>(hits) >=
        0.6 * static_cast<double>(title_set.size())) {
      return start;
    }
  }
  return std::string::npos;
}

bool leading_word_icase(const std::string& text, const char* word) {
  std::size_t i = 0;
  while (i < text.size() && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
  const std::size_t len = std::strlen(word);
  if (text.size() - i < len) return false;
  if (!starts_with_icase(std::string_view(text).substr(i), word)) return false;
  const std::size_t after = i + len;
  return after >= text.size() || !std::isalpha(static_cast<unsigned char>(text[after]));
}

}  // namespace

std::optional<Preference> parse_pairwise(const std::string& text, const std::string& title1,
                                         const std::string& title2) {
  if (leading_word_icase(text, "yes")) return Preference::first;
  if (leading_word_icase(text, "no")) return Preference::second;

  const auto tokens = title_tokens(text);
  const bool has1 = match_position(tokens, title_tokens(title1)) != std::string::npos;
  const bool has2 = match_position(tokens, title_tokens(title2)) != std::string::npos;
  if (has1 == has2) return std::nullopt;  // both or neither
  return has1 ? Preference::first : Preference::second;
}

std::optional<std::vector<int>> parse_listwise(const std::string& text,
                                               const std::vector<std::string>& titles) {
  const auto tokens = title_tokens(text);
  std::vector<std::pair<std::size_t, int>> matched;  // (position, candidate)
  std::vector<int> unmatched;
  for (int c = 0; c < static_cast<int>(titles.size()); ++c) {
    const std::size_t pos = match_position(tokens, title_tokens(titles[static_cast<std::size_t>(c)]));
    if (pos == std::string::npos) {
      unmatched.push_back(c);
    } else {
      matched.emplace_back(pos, c);
    }
  }
  if (matched.size() * 2 < titles.size()) return std::nullopt;
  std::sort(matched.begin(), matched.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });
  std::vector<int> order;
  order.reserve(titles.size());
  for (const auto& [pos, c] : matched) order.push_back(c);
  for (const int c : unmatched) order.push_back(c);
  return order;
}

// --- oracle -------------------------------------------------------------------

OracleBackend::OracleBackend(const SplitDataset& split, const FactorModel* rating_model,
                             const OracleConfig& config)
    : split_(&split), rating_model_(rating_model), config_(config) {
  train_ratings_.resize(split.train.user_count());
  for (const auto& r : split.train.interactions) {
    train_ratings_[static_cast<std::size_t>(r.user)][r.item] = r.rating;
  }
  test_item_.assign(split.train.user_count(), kNoItem);
  for (const auto& [u, r] : split.test) test_item_[static_cast<std::size_t>(u)] = r.item;
}

double OracleBackend::oracle_rating(UserId user, ItemId item) const {
  const int scale = split_->train.scale_max;
  if (user >= 0 && static_cast<std::size_t>(user) < test_item_.size()) {
    if (test_item_[static_cast<std::size_t>(user)] == item) {
      return static_cast<double>(scale) + 1.0;  // the held item beats everything
    }
    const auto& rated = train_ratings_[static_cast<std::size_t>(user)];
    auto it = rated.find(item);
    if (it != rated.end()) return it->second;
  }
  if (rating_model_) return std::round(rating_model_->predict_rating(user, item));
  return std::round(0.5 * (1.0 + static_cast<double>(scale)));
}

std::string OracleBackend::do_complete(const CompletionRequest& request,
                                       const CompletionParams& params) {
  (void)params;
  const PromptMeta& meta = request.meta;
  const int scale = split_->train.scale_max;

  // noise draws depend only on (seed, prompt identity), so runs are
  // reproducible regardless of call interleaving
  std::ostringstream key;
  key << task_name(meta.task) << '\x1f' << meta.user << '\x1f' << meta.shuffle_seed;
  for (const ItemId i : meta.items) key << '\x1f' << i;
  Rng rng(mix_seed(config_.seed, fnv1a(key.str())));
  const bool noisy = rng.next_double() < config_.epsilon;

  switch (meta.task) {
    case RankingTask::pointwise: {
      double r;
      if (noisy) {
        r = rng.uniform(1.0, static_cast<double>(scale));
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", r);
        return std::string(buf) + ".";
      }
      r = std::min(oracle_rating(meta.user, meta.items.at(0)), static_cast<double>(scale));
      return format_double(r) + ".";
    }
    case RankingTask::pairwise: {
      bool first;
      if (noisy) {
        first = rng.below(2) == 0;
      } else {
        const double ra = oracle_rating(meta.user, meta.items.at(0));
        const double rb = oracle_rating(meta.user, meta.items.at(1));
        first = ra > rb || (ra == rb && meta.items[0] < meta.items[1]);
      }
      return first ? "Yes." : "No.";
    }
    case RankingTask::listwise: {
      std::vector<std::size_t> idx(meta.items.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      if (noisy) {
        rng.shuffle(idx);
      } else {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
          const double ra = oracle_rating(meta.user, meta.items[a]);
          const double rb = oracle_rating(meta.user, meta.items[b]);
          if (ra != rb) return ra > rb;
          return meta.items[a] < meta.items[b];
        });
      }
      std::vector<std::string> titles;
      titles.reserve(idx.size());
      for (const std::size_t i : idx) titles.push_back(meta.titles.at(i));
      return join(titles, ", ");
    }
  }
  throw std::logic_error("unhandled ranking task");
}

// --- remote -------------------------------------------------------------------

namespace {

/// Counting semaphore bounding in-flight requests.
class Gate {
public:
  explicit Gate(int slots) : slots_(slots) {}
  void acquire() {
    std::unique_lock lock(m_);
    cv_.wait(lock, [this] { return slots_ > 0; });
    --slots_;
  }
  void release() {
    {
      std::lock_guard lock(m_);
      ++slots_;
    }
    cv_.notify_one();
  }

private:
  std::mutex m_;
  std::condition_variable cv_;
  int slots_;
};

}  // namespace

struct RemoteBackend::Impl {
  RemoteConfig config;
  Gate gate;
  std::string api_key;

  explicit Impl(RemoteConfig cfg)
      : config(std::move(cfg)), gate(std::max(1, config.max_in_flight)) {
    if (const char* key = std::getenv(config.api_key_env.c_str())) api_key = key;
  }
};

RemoteBackend::RemoteBackend(RemoteConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

RemoteBackend::~RemoteBackend() = default;

std::string RemoteBackend::do_complete(const CompletionRequest& request,
                                       const CompletionParams& params) {
  json body;
  body["model"] = impl_->config.model;
  body["messages"] = json::array({json{{"role", "user"}, {"content", request.text}}});
  body["temperature"] = params.temperature;
  body["top_p"] = params.top_p;
  body["top_k"] = params.top_k;
  body["max_tokens"] = params.max_tokens;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!impl_->api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + impl_->api_key);
  }

  impl_->gate.acquire();
  struct Release {
    Gate* g;
    ~Release() { g->release(); }
  } release{&impl_->gate};

  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt < impl_->config.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(impl_->config.backoff_ms << (attempt - 1)));
    }
    httplib::Client client(impl_->config.base_url);
    client.set_connection_timeout(impl_->config.timeout_s);
    client.set_read_timeout(impl_->config.timeout_s);
    auto res = client.Post(impl_->config.path, headers, payload, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "transient status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProtocolError("chat completion returned status " + std::to_string(res->status) +
                          ": " + res->body.substr(0, 200));
    }
    try {
      const json reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("malformed chat completion response: ") + e.what() +
                          "; body: " + res->body.substr(0, 200));
    }
  }
  throw TransportError("chat completion failed after " +
                       std::to_string(impl_->config.max_attempts) + " attempts (" + last_error +
                       ")");
}

// --- transcripts ---------------------------------------------------------------

void write_transcript(const std::filesystem::path& path,
                      const std::vector<TranscriptEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  for (const auto& e : entries) {
    json j;
    j["id"] = e.id;
    j["prompt"] = e.prompt;
    j["response"] = e.response;
    out << j.dump() << "\n";
  }
}

std::vector<TranscriptEntry> read_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open transcript: " + path.string());
  std::vector<TranscriptEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    out.push_back(TranscriptEntry{j.at("id").get<std::uint64_t>(),
                                  j.at("prompt").get<std::string>(),
                                  j.at("response").get<std::string>()});
  }
  return out;
}

ReplayBackend::ReplayBackend(const std::filesystem::path& transcript_path) {
  for (auto& e : read_transcript(transcript_path)) {
    responses_[e.prompt].push_back(std::move(e.response));
  }
}

std::string ReplayBackend::do_complete(const CompletionRequest& request,
                                       const CompletionParams& params) {
  (void)params;
  std::lock_guard lock(mutex_);
  auto it = responses_.find(request.text);
  if (it == responses_.end()) {
    throw ProtocolError("transcript has no response for this prompt");
  }
  std::size_t& at = cursor_[request.text];
  if (at >= it->second.size()) {
    throw ProtocolError("transcript responses for this prompt are exhausted");
  }
  return it->second[at++];
}

}  // namespace llmrank
