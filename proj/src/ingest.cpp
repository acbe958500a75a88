#include "diffaudit/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>
#include <tuple>

#include <json.hpp>

#include "diffaudit/error.hpp"
#include "diffaudit/text.hpp"

namespace diffaudit {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string string_field(const json& obj, const char* key, std::string fallback = {}) {
  if (!obj.is_object()) return fallback;
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) return fallback;
  return it->get<std::string>();
}

std::vector<NameValue> name_value_list(const json& node, const std::string& where) {
  std::vector<NameValue> out;
  if (node.is_null()) return out;
  if (!node.is_array()) throw IngestError(where + ": expected an array of {name, value}");
  for (const auto& item : node) {
    if (!item.is_object() || !item.contains("name") || !item.at("name").is_string()) {
      throw IngestError(where + ": entry without string 'name'");
    }
    std::string value;
    if (item.contains("value")) {
      const auto& v = item.at("value");
      value = v.is_string() ? v.get<std::string>() : v.dump();
    }
    out.emplace_back(item.at("name").get<std::string>(), std::move(value));
  }
  return out;
}

bool has_scheme_and_host(std::string_view url) {
  auto pos = url.find("://");
  if (pos == std::string_view::npos || pos == 0) return false;
  auto rest = url.substr(pos + 3);
  return !rest.empty() && rest.front() != '/' && rest.front() != '?' && rest.front() != '#';
}

bool is_binary_content_type(std::string_view ct) {
  static constexpr std::string_view kBinary[] = {"protobuf", "octet-stream", "grpc", "thrift",
                                                 "msgpack",  "image/",       "audio/",
                                                 "video/",   "zip",          "x-bplist"};
  return std::any_of(std::begin(kBinary), std::end(kBinary),
                     [&](std::string_view b) { return ct.find(b) != std::string_view::npos; });
}

bool looks_like_form(std::string_view s) {
  static const std::regex kForm(R"(^[^=&\s]+=[^&\s]*(&[^=&\s]+=[^&\s]*)*&?$)");
  return !s.empty() && std::regex_match(s.begin(), s.end(), kForm);
}

class KeyCollector {
 public:
  KeyCollector(std::string request_ref, std::vector<RawKey>& out)
      : ref_(std::move(request_ref)), out_(out) {}

  void add(std::string key, std::string path, KeySource source) {
    if (key.empty()) return;
    if (!seen_.emplace(key, path, source).second) return;
    out_.push_back(RawKey{std::move(key), std::move(path), source, ref_});
  }

  void walk_object(const ordered_json& obj, const std::string& path) {
    for (const auto& [k, v] : obj.items()) {
      const std::string child = path.empty() ? k : path + "." + k;
      if (v.is_object() && !v.empty()) {
        walk_object(v, child);
      } else if (v.is_array()) {
        walk_array(v, k, child);
      } else {
        add(k, child, KeySource::body);
      }
    }
  }

  // Arrays never contribute index segments; scalar members belong to the owning key.
  void walk_array(const ordered_json& arr, const std::string& key, const std::string& path) {
    if (arr.empty()) {
      add(key, path, KeySource::body);
      return;
    }
    for (const auto& element : arr) {
      if (element.is_object()) {
        if (!element.empty()) walk_object(element, path);
      } else if (element.is_array()) {
        walk_array(element, key, path);
      } else {
        add(key, path, KeySource::body);
      }
    }
  }

  void walk_root(const ordered_json& root) {
    if (root.is_object()) {
      walk_object(root, "");
    } else if (root.is_array()) {
      for (const auto& element : root) {
        if (element.is_object()) walk_object(element, "");
        else if (element.is_array()) walk_root(element);
      }
    }
  }

 private:
  std::string ref_;
  std::vector<RawKey>& out_;
  std::set<std::tuple<std::string, std::string, KeySource>> seen_;
};

std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

std::string_view to_string(Platform p) {
  switch (p) {
    case Platform::mobile: return "mobile";
    case Platform::web: return "web";
    case Platform::desktop: return "desktop";
  }
  return "web";
}

std::string_view to_string(TraceKind k) {
  switch (k) {
    case TraceKind::account_creation: return "account_creation";
    case TraceKind::logged_in: return "logged_in";
    case TraceKind::logged_out: return "logged_out";
  }
  return "logged_out";
}

std::string_view to_string(AgeGroup a) {
  switch (a) {
    case AgeGroup::child: return "child";
    case AgeGroup::adolescent: return "adolescent";
    case AgeGroup::adult: return "adult";
    case AgeGroup::none: return "none";
  }
  return "none";
}

std::string_view to_string(KeySource s) {
  switch (s) {
    case KeySource::body: return "body";
    case KeySource::query: return "query";
    case KeySource::header: return "header";
  }
  return "body";
}

Platform parse_platform(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "mobile") return Platform::mobile;
  if (v == "web") return Platform::web;
  if (v == "desktop") return Platform::desktop;
  throw IngestError("unknown platform '" + std::string(s) + "'");
}

TraceKind parse_trace_kind(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "account_creation") return TraceKind::account_creation;
  if (v == "logged_in") return TraceKind::logged_in;
  if (v == "logged_out") return TraceKind::logged_out;
  throw IngestError("unknown trace_kind '" + std::string(s) + "'");
}

AgeGroup parse_age_group(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "child") return AgeGroup::child;
  if (v == "adolescent") return AgeGroup::adolescent;
  if (v == "adult") return AgeGroup::adult;
  if (v == "none" || v.empty()) return AgeGroup::none;
  throw IngestError("unknown age_group '" + std::string(s) + "'");
}

KeySource parse_key_source(std::string_view s) {
  if (s == "body") return KeySource::body;
  if (s == "query") return KeySource::query;
  if (s == "header") return KeySource::header;
  throw IngestError("unknown key source '" + std::string(s) + "'");
}

AgeGroup age_group_for_age(int years) {
  if (years < 13) return AgeGroup::child;
  if (years < 16) return AgeGroup::adolescent;
  return AgeGroup::adult;
}

void TraceMeta::validate() const {
  if (service.empty()) throw IngestError("trace " + trace_id + ": empty service name");
  if (trace_kind == TraceKind::logged_out && age_group != AgeGroup::none) {
    throw IngestError("trace " + trace_id + ": logged_out traces carry no age group");
  }
  if (trace_kind != TraceKind::logged_out && age_group == AgeGroup::none) {
    throw IngestError("trace " + trace_id + ": " + std::string(to_string(trace_kind)) +
                      " traces need an age group");
  }
}

std::optional<std::int64_t> parse_iso8601_ms(std::string_view s) {
  static const std::regex kIso(
      R"(^(\d{4})-(\d{2})-(\d{2})[T ](\d{2}):(\d{2}):(\d{2})(?:\.(\d+))?(Z|[+-]\d{2}:?\d{2})?$)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(s.begin(), s.end(), m, kIso)) return std::nullopt;
  auto num = [&](int i) { return std::stoi(m[i].str()); };
  std::int64_t days = days_from_civil(num(1), static_cast<unsigned>(num(2)),
                                      static_cast<unsigned>(num(3)));
  std::int64_t ms = ((days * 24 + num(4)) * 60 + num(5)) * 60 + num(6);
  ms *= 1000;
  if (m[7].matched) {
    auto frac = m[7].str().substr(0, 3);
    while (frac.size() < 3) frac.push_back('0');
    ms += std::stoi(frac);
  }
  if (m[8].matched && m[8].str() != "Z") {
    auto tz = m[8].str();
    int sign = tz[0] == '-' ? -1 : 1;
    tz.erase(std::remove(tz.begin(), tz.end(), ':'), tz.end());
    int minutes = std::stoi(tz.substr(1, 2)) * 60 + std::stoi(tz.substr(3, 2));
    ms -= sign * static_cast<std::int64_t>(minutes) * 60'000;
  }
  return ms;
}

std::vector<NameValue> query_from_url(std::string_view url) {
  auto q = url.find('?');
  if (q == std::string_view::npos) return {};
  auto query = url.substr(q + 1);
  if (auto hash = query.find('#'); hash != std::string_view::npos) query = query.substr(0, hash);
  return text::parse_form(query);
}

std::vector<RawRequest> parse_har(std::string_view bytes, const TraceMeta& meta,
                                  IngestStats* stats) {
  meta.validate();
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw IngestError("malformed HAR: " + std::string(e.what()));
  }
  if (!doc.is_object() || !doc.contains("log") || !doc.at("log").is_object() ||
      !doc.at("log").contains("entries") || !doc.at("log").at("entries").is_array()) {
    throw IngestError("malformed HAR: missing log.entries array");
  }
  std::vector<RawRequest> out;
  std::size_t index = 0;
  for (const auto& entry : doc.at("log").at("entries")) {
    const std::size_t this_index = index++;
    if (stats) ++stats->entries_seen;
    const json request = entry.is_object() && entry.contains("request") ? entry.at("request")
                                                                         : json::object();
    auto url = string_field(request, "url");
    if (url.empty() || !has_scheme_and_host(url)) {
      if (stats) {
        ++stats->skipped_without_url;
        stats->warnings.push_back(meta.trace_id + ": HAR entry " + std::to_string(this_index) +
                                  " has no usable request URL; skipped");
      }
      continue;
    }
    RawRequest req;
    req.id = meta.trace_id + "#" + std::to_string(this_index);
    req.meta = meta;
    req.url = std::move(url);
    req.method = string_field(request, "method", "GET");
    const std::string where = meta.trace_id + " entry " + std::to_string(this_index);
    req.headers = name_value_list(request.value("headers", json()), where + " headers");
    req.query_params = name_value_list(request.value("queryString", json()), where + " queryString");
    if (req.query_params.empty()) req.query_params = query_from_url(req.url);
    if (request.contains("postData") && request.at("postData").is_object()) {
      const auto& post = request.at("postData");
      Body body;
      body.content_type = string_field(post, "mimeType");
      if (post.contains("text") && post.at("text").is_string()) {
        body.text = post.at("text").get<std::string>();
      } else if (post.contains("params")) {
        std::vector<std::string> parts;
        for (const auto& [name, value] : name_value_list(post.at("params"), where + " params")) {
          parts.push_back(name + "=" + value);
        }
        body.text = text::join(parts, "&");
      }
      req.body = std::move(body);
    }
    req.timestamp_ms = parse_iso8601_ms(string_field(entry, "startedDateTime")).value_or(0);
    out.push_back(std::move(req));
  }
  return out;
}

std::vector<RawRequest> parse_capture_trace(std::string_view bytes, const TraceMeta& meta,
                                            IngestStats* stats) {
  meta.validate();
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw IngestError("malformed capture trace: " + std::string(e.what()));
  }
  if (!doc.is_array()) throw IngestError("capture trace must be a JSON array of records");
  std::vector<RawRequest> out;
  std::size_t index = 0;
  for (const auto& rec : doc) {
    const std::size_t this_index = index++;
    const std::string where = meta.trace_id + " record " + std::to_string(this_index);
    if (stats) ++stats->entries_seen;
    if (!rec.is_object()) throw IngestError(where + ": record must be an object");
    auto direction = string_field(rec, "direction");
    if (direction == "in") {
      if (stats) ++stats->incoming_dropped;
      continue;
    }
    if (direction != "out") throw IngestError(where + ": direction must be 'out' or 'in'");
    auto url = string_field(rec, "url");
    if (url.empty() || !has_scheme_and_host(url)) {
      throw IngestError(where + ": missing or unparseable url");
    }
    RawRequest req;
    req.id = meta.trace_id + "#" + std::to_string(this_index);
    req.meta = meta;
    req.url = std::move(url);
    req.method = string_field(rec, "method", "GET");
    req.headers = name_value_list(rec.value("headers", json()), where + " headers");
    req.query_params = name_value_list(rec.value("query", json()), where + " query");
    if (req.query_params.empty()) req.query_params = query_from_url(req.url);
    if (rec.contains("ts_ms")) {
      if (!rec.at("ts_ms").is_number_integer()) throw IngestError(where + ": ts_ms must be an integer");
      req.timestamp_ms = rec.at("ts_ms").get<std::int64_t>();
    }
    if (rec.contains("encrypted") && !rec.at("encrypted").is_boolean()) {
      throw IngestError(where + ": encrypted must be a boolean");
    }
    req.encrypted = rec.value("encrypted", false);
    const bool has_body = rec.contains("body_text") && !rec.at("body_text").is_null();
    if (has_body) {
      if (req.encrypted) throw IngestError(where + ": encrypted record must not carry body_text");
      if (!rec.at("body_text").is_string()) throw IngestError(where + ": body_text must be a string");
      req.body = Body{rec.at("body_text").get<std::string>(), string_field(rec, "content_type")};
    }
    out.push_back(std::move(req));
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
  json doc;
  try {
    doc = json::parse(text::read_file(manifest));
  } catch (const json::parse_error& e) {
    throw IngestError(manifest.string() + ": " + e.what());
  } catch (const Error& e) {
    throw IngestError(e.what());
  }
  const json* traces = &doc;
  if (doc.is_object()) {
    if (!doc.contains("traces")) throw IngestError(manifest.string() + ": missing 'traces'");
    traces = &doc.at("traces");
  }
  if (!traces->is_array()) throw IngestError(manifest.string() + ": 'traces' must be an array");
  std::vector<ManifestEntry> out;
  const auto base = manifest.parent_path();
  std::size_t index = 0;
  for (const auto& t : *traces) {
    const std::string where = manifest.string() + " trace " + std::to_string(index++);
    try {
      if (!t.is_object()) throw IngestError("entry must be an object");
      ManifestEntry entry;
      auto file = string_field(t, "file");
      if (file.empty()) throw IngestError("missing 'file'");
      entry.file = base / file;
      entry.meta.trace_id = file;
      entry.meta.service = string_field(t, "service");
      entry.meta.platform = parse_platform(string_field(t, "platform"));
      entry.meta.trace_kind = parse_trace_kind(string_field(t, "trace_kind"));
      entry.meta.age_group =
          t.contains("age_group") && t.at("age_group").is_string()
              ? parse_age_group(t.at("age_group").get<std::string>())
              : AgeGroup::none;
      entry.meta.validate();
      out.push_back(std::move(entry));
    } catch (const Error& e) {
      throw IngestError(where + ": " + e.what());
    }
  }
  return out;
}

std::vector<RawRequest> parse_capture_bundle(const std::filesystem::path& manifest,
                                             IngestStats* stats) {
  std::vector<RawRequest> all;
  for (const auto& entry : read_manifest(manifest)) {
    if (!std::filesystem::exists(entry.file)) {
      throw IngestError("trace file not found: " + entry.file.string());
    }
    const auto bytes = text::read_file(entry.file);
    bool is_har = entry.file.extension() == ".har";
    if (!is_har) {
      auto first = bytes.find_first_not_of(" \t\r\n");
      is_har = first != std::string::npos && bytes[first] == '{';
    }
    try {
      auto part = is_har ? parse_har(bytes, entry.meta, stats)
                         : parse_capture_trace(bytes, entry.meta, stats);
      std::move(part.begin(), part.end(), std::back_inserter(all));
    } catch (const Error& e) {
      throw IngestError(entry.file.string() + ": " + e.what());
    }
  }
  std::sort(all.begin(), all.end(), [](const RawRequest& a, const RawRequest& b) {
    return std::tie(a.meta, a.timestamp_ms, a.url, a.id) <
           std::tie(b.meta, b.timestamp_ms, b.url, b.id);
  });
  return all;
}

std::vector<RawKey> extract_raw_keys(const RawRequest& req, const KeyExtractionOptions& options,
                                     ExtractionStats* stats) {
  std::vector<RawKey> out;
  if (req.encrypted) return out;
  KeyCollector collector(req.id, out);

  for (const auto& [name, value] : req.query_params) {
    collector.add(name, name, KeySource::query);
  }
  if (options.mine_headers || options.mine_cookies) {
    for (const auto& [name, value] : req.headers) {
      const bool is_cookie = text::iequals(name, "cookie");
      if (options.mine_headers && !is_cookie) collector.add(name, name, KeySource::header);
      if (options.mine_cookies && is_cookie) {
        for (auto part : text::split(value, ';')) {
          auto kv = text::trim(part);
          auto eq = kv.find('=');
          auto cookie = std::string(text::trim(kv.substr(0, eq)));
          if (!cookie.empty()) collector.add(cookie, "cookie." + cookie, KeySource::header);
        }
      }
    }
  }

  if (!req.body || text::trim(req.body->text).empty()) return out;
  const auto content_type = text::to_lower(req.body->content_type);
  const auto body = text::trim(req.body->text);
  if (is_binary_content_type(content_type)) {
    if (stats) ++stats->binary_bodies;
    return out;
  }
  const bool form_type = content_type.find("x-www-form-urlencoded") != std::string::npos;
  const bool json_like = content_type.find("json") != std::string::npos || body.front() == '{' ||
                         body.front() == '[';
  if (json_like && !form_type) {
    try {
      collector.walk_root(ordered_json::parse(body));
      return out;
    } catch (const ordered_json::parse_error&) {
      if (stats) ++stats->unparseable_bodies;
      return out;
    }
  }
  if (form_type || looks_like_form(body)) {
    for (const auto& [name, value] : text::parse_form(body)) {
      collector.add(name, name, KeySource::body);
    }
    return out;
  }
  if (stats) ++stats->unparseable_bodies;
  return out;
}

}  // namespace diffaudit
