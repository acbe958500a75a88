#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace diffaudit {

enum class Platform { mobile, web, desktop };
enum class TraceKind { account_creation, logged_in, logged_out };
/// child < 13, adolescent in [13, 16), adult >= 16; none for logged-out traces.
enum class AgeGroup { child, adolescent, adult, none };

std::string_view to_string(Platform p);
std::string_view to_string(TraceKind k);
std::string_view to_string(AgeGroup a);
Platform parse_platform(std::string_view s);
TraceKind parse_trace_kind(std::string_view s);
AgeGroup parse_age_group(std::string_view s);

/// Maps an age in years onto the COPPA/CCPA age group.
AgeGroup age_group_for_age(int years);

struct TraceMeta {
  std::string service;
  Platform platform = Platform::web;
  TraceKind trace_kind = TraceKind::logged_out;
  AgeGroup age_group = AgeGroup::none;
  std::string trace_id;  // source file name, informational

  /// Throws IngestError if the kind/age combination is inconsistent.
  void validate() const;
  friend bool operator==(const TraceMeta&, const TraceMeta&) = default;
  friend auto operator<=>(const TraceMeta&, const TraceMeta&) = default;
};

using NameValue = std::pair<std::string, std::string>;

struct Body {
  std::string text;
  std::string content_type;
  friend bool operator==(const Body&, const Body&) = default;
};

/// One outgoing request. Encrypted requests carry no body.
struct RawRequest {
  std::string id;  // "<trace_id>#<index>", stable across runs
  TraceMeta meta;
  std::string url;
  std::string method;
  std::vector<NameValue> headers;
  std::vector<NameValue> query_params;
  std::optional<Body> body;
  bool encrypted = false;
  std::int64_t timestamp_ms = 0;
};

enum class KeySource { body, query, header };
std::string_view to_string(KeySource s);
KeySource parse_key_source(std::string_view s);

struct RawKey {
  std::string key;   // leaf key name
  std::string path;  // dotted path from the payload root; last segment == key
  KeySource source = KeySource::body;
  std::string request_ref;
  friend bool operator==(const RawKey&, const RawKey&) = default;
};

struct IngestStats {
  std::size_t entries_seen = 0;
  std::size_t skipped_without_url = 0;
  std::size_t incoming_dropped = 0;
  std::vector<std::string> warnings;
};

struct KeyExtractionOptions {
  bool mine_headers = false;  // header names as RawKeys (source=header)
  bool mine_cookies = false;  // cookie names from Cookie headers (source=header, path "cookie.<name>")
};

struct ExtractionStats {
  std::size_t unparseable_bodies = 0;
  std::size_t binary_bodies = 0;
};

/// Parses a HAR 1.2 document into one RawRequest per entry.
std::vector<RawRequest> parse_har(std::string_view bytes, const TraceMeta& meta,
                                  IngestStats* stats = nullptr);

/// Parses one capture-bundle trace file (array of records); incoming records are dropped.
std::vector<RawRequest> parse_capture_trace(std::string_view bytes, const TraceMeta& meta,
                                            IngestStats* stats = nullptr);

struct ManifestEntry {
  std::filesystem::path file;  // resolved against the manifest directory
  TraceMeta meta;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

/// Parses every trace listed by the manifest (HAR or capture-bundle, detected per file),
/// then sorts the union by (meta, timestamp, url, id).
std::vector<RawRequest> parse_capture_bundle(const std::filesystem::path& manifest,
                                             IngestStats* stats = nullptr);

/// Mines leaf keys from the request payload and query string in document order.
/// Never throws: unparseable content yields no keys and bumps a counter.
std::vector<RawKey> extract_raw_keys(const RawRequest& req, const KeyExtractionOptions& options = {},
                                     ExtractionStats* stats = nullptr);

/// Parses the query string of a URL into name/value pairs.
std::vector<NameValue> query_from_url(std::string_view url);

/// Parses an ISO-8601 timestamp ("2023-10-01T12:00:00.123Z", offsets allowed) to epoch ms.
std::optional<std::int64_t> parse_iso8601_ms(std::string_view s);

}  // namespace diffaudit
