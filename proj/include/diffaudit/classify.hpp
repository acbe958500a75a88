#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffaudit/error.hpp"
#include "diffaudit/ontology.hpp"

namespace diffaudit {

// ---------------------------------------------------------------------------
// Key canonicalization and the offline baseline matcher

/// Lowercases and splits camelCase, snake_case and kebab-case into
/// space-separated tokens. Digits stay attached to their token.
/// Throws ClassifyError on empty input.
std::string normalize_key(std::string_view raw);

struct BaselineMatch {
  std::string label;
  double confidence = 0.0;
  std::string example;  // the matching match-form
};

/// Deterministic example-phrase matcher over the ontology's level-4 phrases.
///
/// Tiers, best first:
///   1. the key's token set equals an example's token set          -> 1.0
///   2. every key token occurs in the example (fewest extra tokens) -> 1.0
///   3. the example phrase occurs inside the normalized key         -> 0.7
/// Within a tier the longest example wins, then the smaller label name.
/// Phrases with a parenthetical ("os (operating system)") yield two forms.
class BaselineMatcher {
 public:
  explicit BaselineMatcher(const Ontology& ont);
  std::optional<BaselineMatch> classify(std::string_view key) const;

 private:
  struct Form {
    std::string text;                 // tokens joined by single spaces
    std::vector<std::string> tokens;  // sorted, unique
    std::string label;
  };
  std::vector<Form> forms_;
};

std::optional<BaselineMatch> baseline_classify(std::string_view key, const Ontology& ont);

// ---------------------------------------------------------------------------
// Prompting and response parsing

/// The classifier instruction sent ahead of the categories.
extern const std::string_view kClassifierInstruction;

/// Instruction plus every label with its examples; independent of the batch.
std::string build_prompt_header(const Ontology& ont);
/// Full prompt: header followed by the batch, one item per line.
/// Throws ClassifyError for an empty batch or one larger than `max_batch`.
std::string build_prompt(const Ontology& ont, std::span<const std::string> batch,
                         std::size_t max_batch = 40);

struct SingleRunResult {
  std::string key;
  std::optional<std::string> label;  // canonical level-3 name when parse_ok
  double confidence = 0.0;
  std::string explanation;  // model explanation, or the reason parsing failed
  double temperature = 0.0;
  bool parse_ok = false;
};

struct ResponseDiagnostics {
  std::size_t lines = 0;
  std::size_t malformed_lines = 0;
  std::size_t unmatched_lines = 0;  // lines whose input text matches no batch key
  std::size_t missing_keys = 0;
};

/// Parses "<input text> // <category> // <score> // <explanation>" lines.
/// Output is aligned with `batch` (one result per key, same order).
std::vector<SingleRunResult> parse_llm_response(std::string_view response, const Ontology& ont,
                                                std::span<const std::string> batch,
                                                ResponseDiagnostics* diagnostics = nullptr);

// ---------------------------------------------------------------------------
// Chat-completion clients

struct CompletionRequest {
  std::string model;
  double temperature = 0.0;
  std::string prompt;
  std::vector<std::string> batch;
};

/// Retryable failure (timeout, throttling, 5xx).
class TransientClientError : public ClassifyError {
 public:
  using ClassifyError::ClassifyError;
};

/// Replay mode has no recorded response for a request.
class FixtureMissingError : public ClassifyError {
 public:
  using ClassifyError::ClassifyError;
};

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  /// Returns the assistant message text. Must be safe to call concurrently.
  virtual std::string complete(const CompletionRequest& request) = 0;
};

/// Serves recorded responses from `*.jsonl` fixture files.
///
/// Each line is one of
///   {"model"?, "temperature", "batch": [...], "response": "..."}   whole-batch record
///   {"model"?, "temperature", "batch": [...], "error": "..."}      injected failure
///   {"model"?, "temperature", "key": "...", "line": "..."}         per-key line
///   {"model"?, "temperature", "key": "...", "error": "..."}        per-key failure
/// Whole-batch records win; otherwise the response is assembled from per-key lines.
class ReplayClient : public CompletionClient {
 public:
  static std::unique_ptr<ReplayClient> load(const std::filesystem::path& dir);
  std::string complete(const CompletionRequest& request) override;
  std::size_t calls() const;

 private:
  struct Entry {
    std::optional<std::string> response;
    std::optional<std::string> error;
  };
  std::map<std::string, Entry> batches_;
  std::map<std::string, Entry> keys_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

/// Forwards to another client and appends every exchange to `<dir>/recorded.jsonl`
/// in the whole-batch replay format.
class RecordingClient : public CompletionClient {
 public:
  RecordingClient(CompletionClient& inner, std::filesystem::path dir);
  std::string complete(const CompletionRequest& request) override;

 private:
  CompletionClient& inner_;
  std::filesystem::path file_;
  std::mutex mutex_;
};

struct HttpClientConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string api_key;
  std::chrono::seconds timeout{60};
};

/// OpenAI-compatible chat-completion endpoint.
std::unique_ptr<CompletionClient> make_http_client(const HttpClientConfig& config);

// ---------------------------------------------------------------------------
// Ensemble runs and voting

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds min_interval{0};  // pacing between calls
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

struct EnsembleConfig {
  std::string model = "gpt-4";
  std::vector<double> temperatures{0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t batch_size = 40;
  std::size_t parallelism = 1;
  RetryPolicy retry;
};

struct EnsembleStats {
  std::size_t calls = 0;
  std::size_t retries = 0;
  std::size_t failed_batches = 0;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::size_t malformed_lines = 0;
};

/// Persistent per-run result cache keyed by (model, temperature, prompt hash, normalized key).
class RunCache {
 public:
  RunCache() = default;
  RunCache(RunCache&& other) noexcept : entries_(std::move(other.entries_)) {}
  RunCache& operator=(RunCache&& other) noexcept {
    entries_ = std::move(other.entries_);
    return *this;
  }

  static RunCache load(const std::filesystem::path& path);  // missing file -> empty cache
  void save(const std::filesystem::path& path) const;

  std::optional<SingleRunResult> find(const std::string& model, double temperature,
                                      const std::string& prompt_hash,
                                      const std::string& normalized_key) const;
  void store(const std::string& model, double temperature, const std::string& prompt_hash,
             const std::string& normalized_key, const SingleRunResult& result);
  std::size_t size() const;

 private:
  static std::string make_key(const std::string& model, double temperature,
                              const std::string& prompt_hash, const std::string& normalized_key);
  mutable std::mutex mutex_;
  std::map<std::string, SingleRunResult> entries_;
};

/// One result per (key, temperature), in temperature order. Keys sharing a
/// normalized form are sent once. Failed calls are retried, then recorded as
/// parse_ok=false placeholders. FixtureMissingError propagates.
std::map<std::string, std::vector<SingleRunResult>> run_ensemble(
    std::span<const std::string> keys, const Ontology& ont, CompletionClient& client,
    const EnsembleConfig& config, RunCache* cache = nullptr, EnsembleStats* stats = nullptr);

enum class VoteMode { majority_max, majority_avg };
std::string_view to_string(VoteMode m);
VoteMode parse_vote_mode(std::string_view s);  // "max"/"avg" or the full names

struct VotedLabel {
  std::string key;
  std::string label;
  double confidence = 0.0;
  VoteMode mode = VoteMode::majority_avg;
  std::size_t support = 0;
  bool tied = false;
};

/// Plurality over parse_ok runs; nullopt (abstain) when none participate.
/// Ties: higher aggregated confidence, then the lexicographically smaller label.
std::optional<VotedLabel> majority_vote(std::span<const SingleRunResult> results, VoteMode mode);

enum class LabelStatus { labeled, unlabeled };
/// Labeled iff confidence >= threshold. Throws ClassifyError if threshold is outside [0, 1].
LabelStatus apply_threshold(const VotedLabel& vote, double threshold);

// ---------------------------------------------------------------------------
// Combined classification

enum class ClassifierMode { baseline, ensemble, baseline_then_ensemble };
std::string_view to_string(ClassifierMode m);
ClassifierMode parse_classifier_mode(std::string_view s);

struct KeyClassification {
  std::string key;
  std::string normalized;
  std::optional<VotedLabel> vote;
  std::string source;  // "baseline", "ensemble" or "none"
  bool labeled = false;
  std::vector<SingleRunResult> runs;  // ensemble runs when consulted
};

struct ClassifySettings {
  ClassifierMode mode = ClassifierMode::baseline;
  VoteMode vote = VoteMode::majority_avg;
  double threshold = 0.8;
  EnsembleConfig ensemble;
};

/// Classifies distinct keys; output sorted by key.
std::vector<KeyClassification> classify_keys(std::span<const std::string> keys,
                                             const Ontology& ont, const ClassifySettings& settings,
                                             CompletionClient* client, RunCache* cache,
                                             EnsembleStats* stats);

// ---------------------------------------------------------------------------
// Validation harness

struct LabeledSample {
  std::vector<std::pair<std::string, std::string>> items;  // key, ground-truth label

  /// CSV with header "key,label"; labels must exist in the ontology.
  static LabeledSample load_csv(const std::filesystem::path& path, const Ontology& ont);
};

struct ThresholdAccuracy {
  double threshold = 0.0;
  std::size_t kept = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;  // correct / kept, 0 when nothing is kept
};

struct AccuracyReport {
  std::string method;
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;  // abstentions count as incorrect
  std::vector<ThresholdAccuracy> per_threshold;
};

using VotedSet = std::map<std::string, std::optional<VotedLabel>>;

inline constexpr double kDefaultThresholdValues[] = {0.7, 0.8, 0.9};
inline constexpr std::span<const double> kDefaultThresholds{kDefaultThresholdValues};

/// Throws ClassifyError when a sample key has no entry in `voted`.
AccuracyReport validate_against_sample(const LabeledSample& sample, const VotedSet& voted,
                                       std::span<const double> thresholds = kDefaultThresholds,
                                       std::string method = "Majority-Avg");

/// Text grid with the Accuracy / Labeled column pairs per threshold.
std::string render_accuracy_table(std::span<const AccuracyReport> rows);
std::string render_accuracy_csv(std::span<const AccuracyReport> rows);

/// Uniform sample of `n` items (all if n >= size) from a seeded Fisher-Yates shuffle,
/// returned in input order.
std::vector<std::string> sample_uniform(std::span<const std::string> items, std::size_t n,
                                        std::uint64_t seed);

}  // namespace diffaudit
