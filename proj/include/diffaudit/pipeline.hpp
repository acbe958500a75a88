#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diffaudit/classify.hpp"
#include "diffaudit/destinations.hpp"
#include "diffaudit/flows.hpp"
#include "diffaudit/ingest.hpp"

namespace diffaudit {

std::string_view tool_version();

struct ClassifierConfig {
  ClassifierMode mode = ClassifierMode::baseline;
  std::string model = "gpt-4";
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  std::vector<double> temperatures{0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t batch_size = 40;
  int max_retries = 3;
  int backoff_ms = 500;
  int min_interval_ms = 0;
  int timeout_s = 60;
  std::size_t parallelism = 1;
  double threshold = 0.8;
  VoteMode vote = VoteMode::majority_avg;
  std::optional<std::filesystem::path> replay_dir;
  std::optional<std::filesystem::path> record_dir;
  std::optional<std::filesystem::path> cache;  // default: <out>/classify/cache.json
};

struct ValidationConfig {
  std::optional<std::filesystem::path> sample;
  std::vector<double> thresholds{0.7, 0.8, 0.9};
  double sample_fraction = 0.1;
  std::optional<std::size_t> sample_size;
};

/// Parsed run configuration. Relative paths are resolved against the config file's directory.
struct RunConfig {
  std::filesystem::path config_path;
  std::filesystem::path base_dir;
  std::string config_sha256;

  std::filesystem::path manifest;
  std::filesystem::path ontology;
  std::filesystem::path psl;
  bool psl_include_private = false;
  std::vector<std::filesystem::path> blocklists;
  std::optional<std::filesystem::path> entity_map;
  std::optional<std::filesystem::path> entity_overrides;
  std::vector<ServiceProfile> services;
  std::optional<std::filesystem::path> disclosures;

  ClassifierConfig classifier;
  AuditOptions audit;
  std::size_t top_n = 10;
  KeyExtractionOptions extraction;
  ValidationConfig validation;

  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::string timestamp;  // SOURCE_DATE_EPOCH, else the config's "timestamp", else "unspecified"

  /// Throws ConfigError for unknown fields, missing files or out-of-range values.
  static RunConfig load(const std::filesystem::path& path);
  std::vector<std::string> service_names() const;
};

struct RunOverrides {
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> replay;
  std::optional<std::filesystem::path> record;
  std::optional<double> threshold;
  std::optional<VoteMode> vote;
  std::optional<std::filesystem::path> sample;
  std::optional<std::filesystem::path> emit_sample;
};

/// Applies command-line overrides and re-checks the affected invariants.
void apply_overrides(RunConfig& config, const RunOverrides& overrides);

struct Provenance {
  std::string stage;
  std::string config_sha256;
  std::map<std::string, std::string> inputs;  // path relative to the config dir -> sha256
  std::map<std::string, std::string> settings;  // effective values after overrides
  std::string tool_version;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::string timestamp;

  std::string to_json() const;  // single line
  /// "# key: value" lines for CSV and text reports.
  std::string to_comment_lines() const;
};

struct IngestSummary {
  std::size_t traces = 0;
  std::size_t requests = 0;
  std::size_t encrypted = 0;
  std::size_t raw_keys = 0;
  std::size_t distinct_keys = 0;
  std::size_t skipped_without_url = 0;
  std::size_t unparseable_bodies = 0;
  std::size_t binary_bodies = 0;
};

struct ClassifySummary {
  std::size_t distinct_keys = 0;
  std::size_t labeled = 0;
  std::size_t residual = 0;
  EnsembleStats ensemble;
};

struct AuditSummary {
  std::size_t flows = 0;
  std::size_t contacts = 0;
  std::size_t findings = 0;
  std::map<std::string, std::size_t> findings_by_rule;
};

struct LinkabilitySummary {
  std::size_t sets = 0;
  std::size_t linkable = 0;
};

struct ValidationSummary {
  std::vector<AccuracyReport> rows;
  std::optional<std::filesystem::path> emitted_sample;
};

/// Stages read and write stores under config.output_dir.
IngestSummary run_ingest(const RunConfig& config);
ClassifySummary run_classify(const RunConfig& config);
AuditSummary run_audit(const RunConfig& config);
LinkabilitySummary run_linkability(const RunConfig& config);
ValidationSummary run_validation(const RunConfig& config,
                                 const std::optional<std::filesystem::path>& emit_sample = {});

}  // namespace diffaudit
