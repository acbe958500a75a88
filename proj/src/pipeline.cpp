#include "diffaudit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <set>

#include <json.hpp>

#include "diffaudit/hash.hpp"
#include "diffaudit/linkability.hpp"
#include "diffaudit/text.hpp"

#ifndef DIFFAUDIT_VERSION
#define DIFFAUDIT_VERSION "0.0.0"
#endif

namespace diffaudit {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string_view tool_version() { return DIFFAUDIT_VERSION; }

namespace {

// ---------------------------------------------------------------------------
// Config parsing helpers

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                    const std::string& where) {
  for (const auto& [k, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError(where + ": unknown field '" + k + "'");
    }
  }
}

template <typename T>
T get_field(const json& obj, const char* name, const std::string& where) {
  try {
    return obj.at(name).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + name + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

fs::path require_file(const fs::path& base, const json& obj, const char* name, const std::string& where) {
  auto path = resolve(base, get_field<std::string>(obj, name, where));
  if (!fs::exists(path)) throw ConfigError(where + "." + name + ": file not found: " + path.string());
  return path;
}

std::optional<fs::path> optional_file(const fs::path& base, const json& obj, const char* name,
                                      const std::string& where) {
  if (!obj.contains(name) || obj.at(name).is_null()) return std::nullopt;
  return require_file(base, obj, name, where);
}

void check_unit(double v, const std::string& what) {
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(what + " must lie in [0, 1]");
}

std::string timestamp_from_env_or(const std::string& fallback) {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    char* end = nullptr;
    const long long seconds = std::strtoll(epoch, &end, 10);
    if (end && *end == '\0') {
      std::time_t t = static_cast<std::time_t>(seconds);
      std::tm tm{};
      gmtime_r(&t, &tm);
      char buf[32];
      std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
      return buf;
    }
  }
  return fallback.empty() ? "unspecified" : fallback;
}

// ---------------------------------------------------------------------------
// Stores

fs::path stage_dir(const RunConfig& c, std::string_view stage) { return c.output_dir / std::string(stage); }

std::string relative_name(const RunConfig& c, const fs::path& p) {
  return p.lexically_relative(c.base_dir).generic_string();
}

Provenance make_provenance(const RunConfig& c, std::string stage) {
  Provenance p;
  p.stage = std::move(stage);
  p.config_sha256 = c.config_sha256;
  p.tool_version = std::string(tool_version());
  p.timestamp = c.timestamp;

  auto add = [&](const fs::path& path) {
    if (fs::is_regular_file(path)) p.inputs[relative_name(c, path)] = sha256_file(path);
  };
  add(c.manifest);
  for (const auto& entry : read_manifest(c.manifest)) add(entry.file);
  add(c.ontology);
  add(c.psl);
  for (const auto& b : c.blocklists) add(b);
  if (c.entity_map) add(*c.entity_map);
  if (c.entity_overrides) add(*c.entity_overrides);
  if (c.disclosures) add(*c.disclosures);
  if (c.validation.sample) add(*c.validation.sample);
  if (c.classifier.replay_dir && fs::is_directory(*c.classifier.replay_dir)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(*c.classifier.replay_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) add(f);
  }

  p.settings["classifier.mode"] = std::string(to_string(c.classifier.mode));
  p.settings["classifier.vote"] = std::string(to_string(c.classifier.vote));
  p.settings["classifier.threshold"] = text::format_number(c.classifier.threshold);
  p.settings["classifier.model"] = c.classifier.model;
  std::vector<std::string> temps;
  for (double t : c.classifier.temperatures) temps.push_back(text::format_number(t));
  p.settings["classifier.temperatures"] = text::join(temps, " ");
  p.settings["classifier.source"] = c.classifier.replay_dir ? "replay" : "live";
  p.settings["audit.r4_tau"] = text::format_number(c.audit.r4_tau);
  p.settings["audit.granularity"] = std::string(to_string(c.audit.granularity));
  p.settings["seed"] = std::to_string(c.seed);
  return p;
}

ordered_json provenance_json(const Provenance& p) { return ordered_json::parse(p.to_json()); }

void write_jsonl(const fs::path& path, const Provenance& p, const std::vector<ordered_json>& rows) {
  std::string out = "{\"provenance\":" + p.to_json() + "}\n";
  for (const auto& r : rows) out += r.dump() + "\n";
  text::write_file(path, out);
}

void write_json_doc(const fs::path& path, const Provenance& p, ordered_json body) {
  ordered_json doc;
  doc["provenance"] = provenance_json(p);
  for (auto& [k, v] : body.items()) doc[k] = v;
  text::write_file(path, doc.dump(2) + "\n");
}

struct Store {
  std::optional<json> provenance;
  std::vector<json> rows;
};

Store read_jsonl(const fs::path& path, std::string_view producer) {
  if (!fs::exists(path)) {
    throw Error("missing store " + path.string() + " (run `diffaudit " + std::string(producer) +
                "` first)");
  }
  Store store;
  std::size_t line_no = 0;
  const auto contents = text::read_file(path);
  for (auto line : text::split(contents, '\n')) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (line_no == 1 && j.contains("provenance")) {
      store.provenance = j.at("provenance");
      continue;
    }
    store.rows.push_back(std::move(j));
  }
  return store;
}

// ---------------------------------------------------------------------------
// Reference data

struct Reference {
  Ontology ontology;
  PublicSuffixList psl;
  EntityMap entities;
  std::vector<Blocklist> blocklists;
};

Reference load_reference(const RunConfig& c) {
  Reference r{load_ontology(c.ontology), PublicSuffixList::load(c.psl, c.psl_include_private), {}, {}};
  if (c.entity_map) r.entities = EntityMap::load(*c.entity_map);
  if (c.entity_overrides) r.entities.merge(EntityMap::load(*c.entity_overrides));
  for (const auto& b : c.blocklists) r.blocklists.push_back(Blocklist::load(b));
  return r;
}

const ServiceProfile& profile_for(const RunConfig& c, const std::string& service) {
  for (const auto& p : c.services) {
    if (p.name == service) return p;
  }
  throw ConfigError("service '" + service + "' has traces but no profile in the config");
}

// ---------------------------------------------------------------------------
// Classifier plumbing

EnsembleConfig ensemble_config(const ClassifierConfig& c) {
  EnsembleConfig e;
  e.model = c.model;
  e.temperatures = c.temperatures;
  e.batch_size = c.batch_size;
  e.parallelism = c.parallelism;
  e.retry.max_retries = c.max_retries;
  e.retry.base_delay = std::chrono::milliseconds(c.backoff_ms);
  e.retry.min_interval = std::chrono::milliseconds(c.min_interval_ms);
  return e;
}

struct ClientChain {
  std::unique_ptr<CompletionClient> base;
  std::unique_ptr<RecordingClient> recorder;
  CompletionClient* active = nullptr;
};

ClientChain make_client(const RunConfig& c) {
  ClientChain chain;
  if (c.classifier.replay_dir) {
    chain.base = ReplayClient::load(*c.classifier.replay_dir);
  } else {
    const char* key = std::getenv(c.classifier.api_key_env.c_str());
    if (!key || !*key) {
      throw ConfigError("live classification needs credentials in $" + c.classifier.api_key_env +
                        " (or use --replay <dir>)");
    }
    HttpClientConfig http;
    http.endpoint = c.classifier.endpoint;
    http.api_key = key;
    http.timeout = std::chrono::seconds(c.classifier.timeout_s);
    chain.base = make_http_client(http);
  }
  chain.active = chain.base.get();
  if (c.classifier.record_dir) {
    chain.recorder = std::make_unique<RecordingClient>(*chain.base, *c.classifier.record_dir);
    chain.active = chain.recorder.get();
  }
  return chain;
}

fs::path cache_path(const RunConfig& c) {
  return c.classifier.cache ? *c.classifier.cache : stage_dir(c, "classify") / "cache.json";
}

// ---------------------------------------------------------------------------
// Flow reconstruction from stores

DestinationRecord dest_from_json(const json& j) {
  DestinationRecord d;
  d.fqdn = j.at("fqdn").get<std::string>();
  d.esld = j.at("esld").get<std::string>();
  if (j.at("owner").is_string()) d.owner = j.at("owner").get<std::string>();
  d.party = j.at("party").get<std::string>() == "first" ? Party::first : Party::third;
  d.ats = j.at("ats").get<bool>();
  d.label = parse_dest_label(j.at("label").get<std::string>());
  d.is_ip = j.value("is_ip", false);
  return d;
}

struct LoadedFlows {
  FlowSet set;  // flows merged across trace kinds
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
};

LoadedFlows load_flows(const RunConfig& c, const Ontology& ont) {
  auto requests = read_jsonl(stage_dir(c, "ingest") / "requests.jsonl", "ingest");
  auto labels = read_jsonl(stage_dir(c, "classify") / "labels.jsonl", "classify");

  std::map<std::string, std::string> labeled;
  for (const auto& row : labels.rows) {
    if (row.at("labeled").get<bool>()) {
      labeled.emplace(row.at("key").get<std::string>(), row.at("label").get<std::string>());
    }
  }
  std::vector<FlowInput> inputs;
  for (const auto& row : requests.rows) {
    FlowInput in;
    in.request_id = row.at("id").get<std::string>();
    in.meta.service = row.at("service").get<std::string>();
    in.meta.platform = parse_platform(row.at("platform").get<std::string>());
    in.meta.trace_kind = parse_trace_kind(row.at("trace_kind").get<std::string>());
    in.meta.age_group = parse_age_group(row.at("age_group").get<std::string>());
    in.meta.trace_id = row.at("trace_id").get<std::string>();
    in.encrypted = row.at("encrypted").get<bool>();
    in.dest = dest_from_json(row.at("dest"));
    for (const auto& k : row.at("keys")) in.keys.push_back(k.at("key").get<std::string>());
    inputs.push_back(std::move(in));
  }
  auto built = build_flows(inputs, labeled, ont);
  LoadedFlows out;
  out.set.flows = merge_age_traces(built.flows);
  out.set.contacts = std::move(built.contacts);
  if (labels.provenance) {
    out.cache_hits = labels.provenance->value("cache_hits", std::size_t{0});
    out.cache_misses = labels.provenance->value("cache_misses", std::size_t{0});
  }
  return out;
}

std::string join_set(const auto& items, std::string_view sep = ";") {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += sep;
    out += s;
  }
  return out;
}

std::string platforms_text(const std::set<Platform>& platforms) {
  std::vector<std::string> names;
  for (auto p : platforms) names.emplace_back(to_string(p));
  std::sort(names.begin(), names.end());
  return join_set(names);
}

ordered_json flow_identity_json(const FlowIdentity& f) {
  return ordered_json{{"category", f.category}, {"dest", std::string(to_string(f.label))}, {"esld", f.esld}};
}

}  // namespace

// ---------------------------------------------------------------------------

std::string Provenance::to_json() const {
  ordered_json j;
  j["stage"] = stage;
  j["tool_version"] = tool_version;
  j["config_sha256"] = config_sha256;
  j["timestamp"] = timestamp;
  j["cache_hits"] = cache_hits;
  j["cache_misses"] = cache_misses;
  j["settings"] = ordered_json::object();
  for (const auto& [k, v] : settings) j["settings"][k] = v;
  j["inputs"] = ordered_json::object();
  for (const auto& [k, v] : inputs) j["inputs"][k] = v;
  return j.dump();
}

std::string Provenance::to_comment_lines() const {
  std::string out;
  out += "# stage: " + stage + "\n";
  out += "# tool_version: " + tool_version + "\n";
  out += "# config_sha256: " + config_sha256 + "\n";
  out += "# timestamp: " + timestamp + "\n";
  out += "# cache: " + std::to_string(cache_hits) + " hits, " + std::to_string(cache_misses) + " misses\n";
  for (const auto& [k, v] : settings) out += "# setting " + k + ": " + v + "\n";
  for (const auto& [k, v] : inputs) out += "# input " + k + ": " + v + "\n";
  return out;
}

RunConfig RunConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  const auto bytes = text::read_file(path);
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(path.string() + ": config must be a JSON object");
  const std::string where = path.filename().string();
  reject_unknown(doc,
                 {"manifest", "ontology", "psl", "psl_include_private", "blocklists", "entity_map",
                  "entity_overrides", "services", "disclosures", "classifier", "audit",
                  "linkability", "ingest", "validation", "output_dir", "seed", "timestamp"},
                 where);

  RunConfig c;
  c.config_path = fs::absolute(path).lexically_normal();
  c.base_dir = c.config_path.parent_path();
  c.config_sha256 = sha256_hex(bytes);
  const auto& base = c.base_dir;

  c.manifest = require_file(base, doc, "manifest", where);
  c.ontology = require_file(base, doc, "ontology", where);
  c.psl = require_file(base, doc, "psl", where);
  c.psl_include_private = doc.value("psl_include_private", false);
  for (const auto& b : doc.value("blocklists", json::array())) {
    auto p = resolve(base, b.get<std::string>());
    if (!fs::exists(p)) throw ConfigError(where + ".blocklists: file not found: " + p.string());
    c.blocklists.push_back(p);
  }
  c.entity_map = optional_file(base, doc, "entity_map", where);
  c.entity_overrides = optional_file(base, doc, "entity_overrides", where);
  c.disclosures = optional_file(base, doc, "disclosures", where);

  if (!doc.contains("services") || !doc.at("services").is_array() || doc.at("services").empty()) {
    throw ConfigError(where + ".services: at least one service profile is required");
  }
  std::set<std::string> names;
  for (const auto& s : doc.at("services")) {
    reject_unknown(s, {"name", "first_party_eslds", "owner_orgs"}, where + ".services[]");
    ServiceProfile p;
    p.name = get_field<std::string>(s, "name", where + ".services[]");
    if (!names.insert(p.name).second) throw ConfigError(where + ".services: duplicate '" + p.name + "'");
    for (const auto& e : s.value("first_party_eslds", json::array())) {
      p.first_party_eslds.push_back(text::to_lower(e.get<std::string>()));
    }
    for (const auto& o : s.value("owner_orgs", json::array())) {
      p.owner_orgs.push_back(text::to_lower(o.get<std::string>()));
    }
    c.services.push_back(std::move(p));
  }

  if (doc.contains("classifier")) {
    const auto& k = doc.at("classifier");
    const auto w = where + ".classifier";
    reject_unknown(k,
                   {"mode", "model", "endpoint", "api_key_env", "temperatures", "batch_size",
                    "max_retries", "backoff_ms", "min_interval_ms", "timeout_s", "parallelism",
                    "threshold", "vote", "replay_dir", "record_dir", "cache"},
                   w);
    auto& cc = c.classifier;
    try {
      if (k.contains("mode")) cc.mode = parse_classifier_mode(k.at("mode").get<std::string>());
      if (k.contains("vote")) cc.vote = parse_vote_mode(k.at("vote").get<std::string>());
    } catch (const ClassifyError& e) {
      throw ConfigError(w + ": " + e.what());
    }
    cc.model = k.value("model", cc.model);
    cc.endpoint = k.value("endpoint", cc.endpoint);
    cc.api_key_env = k.value("api_key_env", cc.api_key_env);
    cc.temperatures = k.value("temperatures", cc.temperatures);
    cc.batch_size = k.value("batch_size", cc.batch_size);
    cc.max_retries = k.value("max_retries", cc.max_retries);
    cc.backoff_ms = k.value("backoff_ms", cc.backoff_ms);
    cc.min_interval_ms = k.value("min_interval_ms", cc.min_interval_ms);
    cc.timeout_s = k.value("timeout_s", cc.timeout_s);
    cc.parallelism = k.value("parallelism", cc.parallelism);
    cc.threshold = k.value("threshold", cc.threshold);
    if (k.contains("replay_dir")) cc.replay_dir = resolve(base, k.at("replay_dir").get<std::string>());
    if (k.contains("record_dir")) cc.record_dir = resolve(base, k.at("record_dir").get<std::string>());
    if (k.contains("cache")) cc.cache = resolve(base, k.at("cache").get<std::string>());
  }
  if (doc.contains("audit")) {
    const auto& a = doc.at("audit");
    reject_unknown(a, {"r4_tau", "granularity"}, where + ".audit");
    c.audit.r4_tau = a.value("r4_tau", c.audit.r4_tau);
    if (a.contains("granularity")) {
      try {
        c.audit.granularity = parse_granularity(a.at("granularity").get<std::string>());
      } catch (const Error& e) {
        throw ConfigError(where + ".audit: " + e.what());
      }
    }
  }
  if (doc.contains("linkability")) {
    const auto& l = doc.at("linkability");
    reject_unknown(l, {"top_n"}, where + ".linkability");
    c.top_n = l.value("top_n", c.top_n);
  }
  if (doc.contains("ingest")) {
    const auto& i = doc.at("ingest");
    reject_unknown(i, {"mine_headers", "mine_cookies"}, where + ".ingest");
    c.extraction.mine_headers = i.value("mine_headers", false);
    c.extraction.mine_cookies = i.value("mine_cookies", false);
  }
  if (doc.contains("validation")) {
    const auto& v = doc.at("validation");
    reject_unknown(v, {"sample", "thresholds", "sample_fraction", "sample_size"}, where + ".validation");
    c.validation.sample = optional_file(base, v, "sample", where + ".validation");
    c.validation.thresholds = v.value("thresholds", c.validation.thresholds);
    c.validation.sample_fraction = v.value("sample_fraction", c.validation.sample_fraction);
    if (v.contains("sample_size")) c.validation.sample_size = v.at("sample_size").get<std::size_t>();
  }
  c.output_dir = resolve(base, doc.value("output_dir", std::string("out")));
  c.seed = doc.value("seed", std::uint64_t{0});
  c.timestamp = timestamp_from_env_or(doc.value("timestamp", std::string()));

  check_unit(c.classifier.threshold, "classifier.threshold");
  if (c.classifier.temperatures.empty()) throw ConfigError("classifier.temperatures must not be empty");
  for (double t : c.classifier.temperatures) check_unit(t, "classifier.temperatures");
  if (c.classifier.batch_size == 0) throw ConfigError("classifier.batch_size must be positive");
  if (c.classifier.max_retries < 0) throw ConfigError("classifier.max_retries must not be negative");
  check_unit(c.audit.r4_tau, "audit.r4_tau");
  for (double t : c.validation.thresholds) check_unit(t, "validation.thresholds");
  check_unit(c.validation.sample_fraction, "validation.sample_fraction");
  return c;
}

std::vector<std::string> RunConfig::service_names() const {
  std::vector<std::string> out;
  for (const auto& s : services) out.push_back(s.name);
  return out;
}

void apply_overrides(RunConfig& c, const RunOverrides& o) {
  if (o.out) c.output_dir = fs::absolute(*o.out).lexically_normal();
  if (o.replay) {
    if (!fs::is_directory(*o.replay)) throw ConfigError("replay directory not found: " + o.replay->string());
    c.classifier.replay_dir = fs::absolute(*o.replay).lexically_normal();
  }
  if (o.record) c.classifier.record_dir = fs::absolute(*o.record).lexically_normal();
  if (o.threshold) {
    check_unit(*o.threshold, "--threshold");
    c.classifier.threshold = *o.threshold;
  }
  if (o.vote) c.classifier.vote = *o.vote;
  if (o.sample) {
    if (!fs::exists(*o.sample)) throw ConfigError("sample file not found: " + o.sample->string());
    c.validation.sample = fs::absolute(*o.sample).lexically_normal();
  }
}

// ---------------------------------------------------------------------------

IngestSummary run_ingest(const RunConfig& c) {
  const auto ref = load_reference(c);
  IngestStats stats;
  auto requests = parse_capture_bundle(c.manifest, &stats);
  DestinationCategorizer categorizer(ref.psl, ref.entities, ref.blocklists);

  IngestSummary summary;
  summary.skipped_without_url = stats.skipped_without_url;
  ExtractionStats extraction;

  struct Tally {
    std::set<std::string> traces, fqdns, eslds, keys;
    std::size_t requests = 0, encrypted = 0;
  };
  std::map<std::string, Tally> per_service;
  std::map<TraceMeta, Tally> per_trace;
  Tally total;
  std::vector<ordered_json> rows;

  for (const auto& req : requests) {
    const auto& profile = profile_for(c, req.meta.service);
    DestinationRecord dest;
    try {
      dest = categorizer.categorize(req.url, profile);
    } catch (const Error& e) {
      throw IngestError(req.meta.trace_id + ": request " + req.id + ": " + e.what());
    }
    auto keys = extract_raw_keys(req, c.extraction, &extraction);

    ordered_json row;
    row["id"] = req.id;
    row["service"] = req.meta.service;
    row["platform"] = std::string(to_string(req.meta.platform));
    row["trace_kind"] = std::string(to_string(req.meta.trace_kind));
    row["age_group"] = std::string(to_string(req.meta.age_group));
    row["trace_id"] = req.meta.trace_id;
    row["method"] = req.method;
    row["url"] = req.url;
    row["timestamp_ms"] = req.timestamp_ms;
    row["encrypted"] = req.encrypted;
    row["dest"] = ordered_json{{"fqdn", dest.fqdn},
                               {"esld", dest.esld},
                               {"owner", dest.owner ? ordered_json(*dest.owner) : ordered_json(nullptr)},
                               {"party", std::string(to_string(dest.party))},
                               {"ats", dest.ats},
                               {"label", std::string(to_string(dest.label))},
                               {"is_ip", dest.is_ip}};
    row["keys"] = ordered_json::array();
    for (const auto& k : keys) {
      row["keys"].push_back(
          ordered_json{{"key", k.key}, {"path", k.path}, {"source", std::string(to_string(k.source))}});
    }
    rows.push_back(std::move(row));

    for (Tally* t : {&per_service[req.meta.service], &per_trace[req.meta], &total}) {
      t->traces.insert(req.meta.trace_id);
      t->fqdns.insert(dest.fqdn);
      t->eslds.insert(dest.esld);
      for (const auto& k : keys) t->keys.insert(k.key);
      ++t->requests;
      if (req.encrypted) ++t->encrypted;
    }
    summary.raw_keys += keys.size();
  }
  summary.traces = read_manifest(c.manifest).size();
  summary.requests = requests.size();
  summary.encrypted = total.encrypted;
  summary.distinct_keys = total.keys.size();
  summary.unparseable_bodies = extraction.unparseable_bodies;
  summary.binary_bodies = extraction.binary_bodies;

  const auto prov = make_provenance(c, "ingest");
  const auto dir = stage_dir(c, "ingest");
  write_jsonl(dir / "requests.jsonl", prov, rows);

  auto stat_row = [](const std::string& name, const Tally& t) {
    return text::csv_field(name) + "," + std::to_string(t.traces.size()) + "," +
           std::to_string(t.requests) + "," + std::to_string(t.encrypted) + "," +
           std::to_string(t.fqdns.size()) + "," + std::to_string(t.eslds.size()) + "," +
           std::to_string(t.keys.size()) + "\n";
  };
  std::string stats_csv = prov.to_comment_lines() + "service,traces,requests,encrypted,domains,eslds,raw_keys\n";
  for (const auto& s : c.services) {
    auto it = per_service.find(s.name);
    stats_csv += stat_row(s.name, it == per_service.end() ? Tally{} : it->second);
  }
  stats_csv += stat_row("Total", total);
  text::write_file(dir / "stats.csv", stats_csv);

  std::string trace_csv = prov.to_comment_lines() +
                          "trace_id,service,platform,trace_kind,age_group,requests,encrypted,domains,eslds,raw_keys\n";
  for (const auto& [meta, t] : per_trace) {
    trace_csv += text::csv_field(meta.trace_id) + "," + text::csv_field(meta.service) + "," +
                 std::string(to_string(meta.platform)) + "," + std::string(to_string(meta.trace_kind)) +
                 "," + std::string(to_string(meta.age_group)) + "," + std::to_string(t.requests) + "," +
                 std::to_string(t.encrypted) + "," + std::to_string(t.fqdns.size()) + "," +
                 std::to_string(t.eslds.size()) + "," + std::to_string(t.keys.size()) + "\n";
  }
  text::write_file(dir / "trace_stats.csv", trace_csv);
  return summary;
}

ClassifySummary run_classify(const RunConfig& c) {
  const auto ont = load_ontology(c.ontology);
  auto store = read_jsonl(stage_dir(c, "ingest") / "requests.jsonl", "ingest");
  std::set<std::string> distinct;
  for (const auto& row : store.rows) {
    for (const auto& k : row.at("keys")) distinct.insert(k.at("key").get<std::string>());
  }
  std::vector<std::string> keys(distinct.begin(), distinct.end());

  ClassifySettings settings;
  settings.mode = c.classifier.mode;
  settings.vote = c.classifier.vote;
  settings.threshold = c.classifier.threshold;
  settings.ensemble = ensemble_config(c.classifier);

  ClientChain client;
  if (c.classifier.mode != ClassifierMode::baseline) client = make_client(c);
  auto cache = RunCache::load(cache_path(c));
  ClassifySummary summary;
  auto results = classify_keys(keys, ont, settings, client.active, &cache, &summary.ensemble);
  if (c.classifier.mode != ClassifierMode::baseline) cache.save(cache_path(c));

  auto prov = make_provenance(c, "classify");
  prov.cache_hits = summary.ensemble.cache_hits;
  prov.cache_misses = summary.ensemble.cache_misses;

  std::vector<ordered_json> label_rows;
  std::vector<ordered_json> run_rows;
  std::string residual = prov.to_comment_lines() + "key,normalized,best_label,confidence,source\n";
  for (const auto& kc : results) {
    ordered_json row;
    row["key"] = kc.key;
    row["normalized"] = kc.normalized;
    row["label"] = kc.vote ? ordered_json(kc.vote->label) : ordered_json(nullptr);
    row["level2"] = kc.vote ? ordered_json(ont.abstract_to_level2(kc.vote->label)) : ordered_json(nullptr);
    row["confidence"] = kc.vote ? kc.vote->confidence : 0.0;
    row["labeled"] = kc.labeled;
    row["source"] = kc.source;
    row["support"] = kc.vote ? kc.vote->support : 0;
    row["tied"] = kc.vote ? kc.vote->tied : false;
    label_rows.push_back(std::move(row));
    for (const auto& r : kc.runs) {
      ordered_json run;
      run["key"] = r.key;
      run["temperature"] = r.temperature;
      run["label"] = r.label ? ordered_json(*r.label) : ordered_json(nullptr);
      run["confidence"] = r.confidence;
      run["parse_ok"] = r.parse_ok;
      run["explanation"] = r.explanation;
      run_rows.push_back(std::move(run));
    }
    if (kc.labeled) {
      ++summary.labeled;
    } else {
      ++summary.residual;
      residual += text::csv_field(kc.key) + "," + text::csv_field(kc.normalized) + "," +
                  text::csv_field(kc.vote ? kc.vote->label : "") + "," +
                  text::format_number(kc.vote ? kc.vote->confidence : 0.0) + "," + kc.source + "\n";
    }
  }
  summary.distinct_keys = results.size();

  const auto dir = stage_dir(c, "classify");
  write_jsonl(dir / "labels.jsonl", prov, label_rows);
  write_jsonl(dir / "runs.jsonl", prov, run_rows);
  text::write_file(dir / "residual.csv", residual);
  return summary;
}

AuditSummary run_audit(const RunConfig& c) {
  const auto ont = load_ontology(c.ontology);
  auto loaded = load_flows(c, ont);
  const auto& flows = loaded.set.flows;
  const auto services = c.service_names();
  const auto disclosures = c.disclosures ? DisclosureSet::load(*c.disclosures, ont) : DisclosureSet{};

  auto findings = audit(flows, disclosures, ont, services, c.audit);
  auto matrix = build_matrix(flows, ont, services);
  auto diff = diff_age_groups(flows, services, c.audit.granularity);

  auto prov = make_provenance(c, "audit");
  prov.cache_hits = loaded.cache_hits;
  prov.cache_misses = loaded.cache_misses;
  const auto dir = stage_dir(c, "audit");

  std::vector<ordered_json> flow_rows;
  for (const auto& f : flows) {
    ordered_json j;
    j["service"] = f.service;
    j["trace_category"] = std::string(to_string(f.trace_category));
    j["category2"] = f.category2;
    j["category3"] = f.category3;
    j["dest"] = std::string(to_string(f.label));
    j["esld"] = f.esld;
    j["owner"] = f.owner ? ordered_json(*f.owner) : ordered_json(nullptr);
    j["fqdns"] = f.fqdns;
    j["platforms"] = ordered_json::array();
    for (auto p : f.platforms) j["platforms"].push_back(std::string(to_string(p)));
    j["presence"] = std::string(to_string(presence_of(f.platforms)));
    j["occurrences"] = f.occurrence_count;
    flow_rows.push_back(std::move(j));
  }
  write_jsonl(dir / "flows.jsonl", prov, flow_rows);

  text::write_file(dir / "matrix.txt", prov.to_comment_lines() + render_matrix_text(matrix));
  write_json_doc(dir / "matrix.json", prov, ordered_json::parse(render_matrix_json(matrix)));

  AuditSummary summary;
  summary.flows = flows.size();
  summary.contacts = loaded.set.contacts.size();
  summary.findings = findings.size();

  ordered_json list = ordered_json::array();
  std::string csv = prov.to_comment_lines() +
                    "rule,severity,service,trace_category,category,dest,esld,level3_evidence,"
                    "jaccard_child_adult,jaccard_adolescent_adult,explanation\n";
  for (const auto& f : findings) {
    ++summary.findings_by_rule[std::string(to_string(f.rule))];
    ordered_json j;
    j["rule"] = std::string(to_string(f.rule));
    j["severity"] = std::string(to_string(f.severity));
    j["service"] = f.service;
    j["trace_category"] = f.trace_category ? ordered_json(std::string(to_string(*f.trace_category))) : ordered_json(nullptr);
    j["category"] = f.category2.empty() ? ordered_json(nullptr) : ordered_json(f.category2);
    j["dest"] = f.label ? ordered_json(std::string(to_string(*f.label))) : ordered_json(nullptr);
    j["esld"] = f.esld.empty() ? ordered_json(nullptr) : ordered_json(f.esld);
    j["flows"] = ordered_json::array();
    std::vector<std::string> evidence;
    for (const auto& e : f.flows) {
      j["flows"].push_back(ordered_json{{"category3", e.category3},
                                        {"esld", e.esld},
                                        {"dest", std::string(to_string(e.label))},
                                        {"fqdns", e.fqdns},
                                        {"occurrences", e.occurrence_count}});
      evidence.push_back(e.category3);
    }
    auto score = [](const std::optional<double>& v) {
      return v ? ordered_json(*v) : ordered_json(nullptr);
    };
    j["jaccard_child_adult"] = score(f.jaccard_child_adult);
    j["jaccard_adolescent_adult"] = score(f.jaccard_adolescent_adult);
    j["explanation"] = f.explanation;
    list.push_back(std::move(j));

    auto score_text = [](const std::optional<double>& v) { return v ? text::format_number(*v, 4) : ""; };
    csv += std::string(to_string(f.rule)) + "," + std::string(to_string(f.severity)) + "," +
           text::csv_field(f.service) + "," +
           (f.trace_category ? std::string(to_string(*f.trace_category)) : "") + "," +
           text::csv_field(f.category2) + "," + (f.label ? std::string(to_string(*f.label)) : "") +
           "," + text::csv_field(f.esld) + "," + text::csv_field(join_set(evidence)) + "," +
           score_text(f.jaccard_child_adult) + "," + score_text(f.jaccard_adolescent_adult) + "," +
           text::csv_field(f.explanation) + "\n";
  }
  write_json_doc(dir / "findings.json", prov, ordered_json{{"findings", std::move(list)}});
  text::write_file(dir / "findings.csv", csv);

  ordered_json pairs = ordered_json::array();
  for (const auto& d : diff.pairs) {
    ordered_json j;
    j["service"] = d.service;
    j["left"] = std::string(to_string(d.left));
    j["right"] = std::string(to_string(d.right));
    j["left_size"] = d.left_size;
    j["right_size"] = d.right_size;
    j["jaccard"] = d.jaccard;
    j["only_left"] = ordered_json::array();
    for (const auto& f : d.only_left) j["only_left"].push_back(flow_identity_json(f));
    j["only_right"] = ordered_json::array();
    for (const auto& f : d.only_right) j["only_right"].push_back(flow_identity_json(f));
    pairs.push_back(std::move(j));
  }
  write_json_doc(dir / "diff.json", prov,
                 ordered_json{{"granularity", std::string(to_string(diff.granularity))}, {"pairs", std::move(pairs)}});

  std::string contacts = prov.to_comment_lines() +
                         "service,trace_category,esld,dest,owner,fqdns,platforms,occurrences\n";
  for (const auto& ct : loaded.set.contacts) {
    contacts += text::csv_field(ct.service) + "," + std::string(to_string(ct.trace_category)) + "," +
                text::csv_field(ct.esld) + "," + std::string(to_string(ct.label)) + "," +
                text::csv_field(ct.owner.value_or("")) + "," + text::csv_field(join_set(ct.fqdns)) +
                "," + platforms_text(ct.platforms) + "," + std::to_string(ct.occurrence_count) + "\n";
  }
  text::write_file(dir / "contacts.csv", contacts);
  return summary;
}

LinkabilitySummary run_linkability(const RunConfig& c) {
  const auto ont = load_ontology(c.ontology);
  auto loaded = load_flows(c, ont);
  const auto services = c.service_names();
  auto sets = linkable_sets(loaded.set.flows, ont);
  auto counts = count_linkable_third_parties(sets, services);
  auto summary_sets = largest_and_common_sets(sets);
  auto rankings = top_ats_orgs(sets, c.top_n);
  auto annex = cross_context(sets);

  auto prov = make_provenance(c, "linkability");
  prov.cache_hits = loaded.cache_hits;
  prov.cache_misses = loaded.cache_misses;
  const auto dir = stage_dir(c, "linkability");
  text::write_file(dir / "counts.csv", prov.to_comment_lines() + render_counts_csv(counts));
  text::write_file(dir / "alluvial.csv", prov.to_comment_lines() + render_alluvial_csv(rankings));
  write_json_doc(dir / "sets.json", prov,
                 ordered_json::parse(render_sets_json(sets, summary_sets, rankings, annex)));

  LinkabilitySummary out;
  out.sets = sets.size();
  for (const auto& s : sets) out.linkable += s.linkable ? 1 : 0;
  return out;
}

ValidationSummary run_validation(const RunConfig& c, const std::optional<fs::path>& emit_sample) {
  const auto ont = load_ontology(c.ontology);
  ValidationSummary summary;

  if (emit_sample) {
    auto store = read_jsonl(stage_dir(c, "ingest") / "requests.jsonl", "ingest");
    std::set<std::string> distinct;
    for (const auto& row : store.rows) {
      for (const auto& k : row.at("keys")) distinct.insert(k.at("key").get<std::string>());
    }
    std::vector<std::string> keys(distinct.begin(), distinct.end());
    const auto n = c.validation.sample_size.value_or(static_cast<std::size_t>(
        std::ceil(c.validation.sample_fraction * static_cast<double>(keys.size()))));
    std::string csv = "key,label\n";
    for (const auto& k : sample_uniform(keys, n, c.seed)) csv += text::csv_field(k) + ",\n";
    text::write_file(*emit_sample, csv);
    summary.emitted_sample = *emit_sample;
    return summary;
  }

  if (!c.validation.sample) {
    throw ConfigError("validate-classifier needs a labeled sample (--sample or validation.sample)");
  }
  const auto sample = LabeledSample::load_csv(*c.validation.sample, ont);
  std::vector<std::string> keys;
  for (const auto& [k, _] : sample.items) keys.push_back(k);
  const auto& thresholds = c.validation.thresholds;

  BaselineMatcher matcher(ont);
  VotedSet baseline;
  for (const auto& k : keys) {
    auto m = matcher.classify(k);
    baseline[k] = m ? std::optional<VotedLabel>(VotedLabel{k, m->label, m->confidence, c.classifier.vote, 1, false})
                    : std::nullopt;
  }
  summary.rows.push_back(validate_against_sample(sample, baseline, thresholds, "Baseline"));

  EnsembleStats stats;
  if (c.classifier.mode != ClassifierMode::baseline) {
    auto client = make_client(c);
    auto cache = RunCache::load(cache_path(c));
    auto runs = run_ensemble(keys, ont, *client.active, ensemble_config(c.classifier), &cache, &stats);
    cache.save(cache_path(c));
    for (std::size_t ti = 0; ti < c.classifier.temperatures.size(); ++ti) {
      VotedSet single;
      for (const auto& k : keys) {
        const auto& r = runs.at(k).at(ti);
        single[k] = r.parse_ok ? std::optional<VotedLabel>(VotedLabel{k, *r.label, r.confidence,
                                                                      VoteMode::majority_max, 1, false})
                               : std::nullopt;
      }
      summary.rows.push_back(validate_against_sample(
          sample, single, thresholds, text::format_number(c.classifier.temperatures[ti], 2)));
    }
    for (auto mode : {VoteMode::majority_max, VoteMode::majority_avg}) {
      VotedSet voted;
      for (const auto& k : keys) voted[k] = majority_vote(runs.at(k), mode);
      summary.rows.push_back(validate_against_sample(
          sample, voted, thresholds, mode == VoteMode::majority_max ? "Majority-Max" : "Majority-Avg"));
    }
  }

  auto prov = make_provenance(c, "validation");
  prov.cache_hits = stats.cache_hits;
  prov.cache_misses = stats.cache_misses;
  const auto dir = stage_dir(c, "validation");
  text::write_file(dir / "accuracy.txt", prov.to_comment_lines() + render_accuracy_table(summary.rows) + "\n");
  text::write_file(dir / "accuracy.csv", prov.to_comment_lines() + render_accuracy_csv(summary.rows));
  ordered_json rows = ordered_json::array();
  for (const auto& r : summary.rows) {
    ordered_json j;
    j["method"] = r.method;
    j["total"] = r.total;
    j["correct"] = r.correct;
    j["accuracy"] = r.accuracy;
    j["per_threshold"] = ordered_json::array();
    for (const auto& t : r.per_threshold) {
      j["per_threshold"].push_back(ordered_json{{"threshold", t.threshold},
                                                {"labeled", t.kept},
                                                {"correct", t.correct},
                                                {"accuracy", t.accuracy}});
    }
    rows.push_back(std::move(j));
  }
  write_json_doc(dir / "accuracy.json", prov, ordered_json{{"rows", std::move(rows)}});
  return summary;
}

}  // namespace diffaudit
