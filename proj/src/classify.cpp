#include "diffaudit/classify.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <random>
#include <set>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "diffaudit/hash.hpp"
#include "diffaudit/text.hpp"

namespace diffaudit {

namespace {

using nlohmann::json;

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
bool is_lower(char c) { return std::islower(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string> key_tokens(std::string_view raw) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    if (!is_alnum(c)) {
      flush();
      continue;
    }
    if (is_upper(c) && !current.empty()) {
      const char prev = raw[i - 1];
      const bool next_lower = i + 1 < raw.size() && is_lower(raw[i + 1]);
      // "optOut" and "v2Beta" split before the capital; "HTMLParser" splits before "Parser".
      if (is_lower(prev) || is_digit(prev) || (is_upper(prev) && next_lower)) flush();
    }
    current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  flush();
  return tokens;
}

// Lowercase alphanumeric tokens of an example phrase.
std::vector<std::string> phrase_tokens(std::string_view phrase) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : phrase) {
    if (is_alnum(c)) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::string strip_wrapping(std::string_view s) {
  s = text::trim(s);
  while (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                           (s.front() == '\'' && s.back() == '\'') ||
                           (s.front() == '<' && s.back() == '>') ||
                           (s.front() == '`' && s.back() == '`'))) {
    s = text::trim(s.substr(1, s.size() - 2));
  }
  return std::string(s);
}

std::string_view strip_list_marker(std::string_view line) {
  if (line.starts_with("- ") || line.starts_with("* ")) return text::trim(line.substr(2));
  std::size_t i = 0;
  while (i < line.size() && is_digit(line[i])) ++i;
  if (i > 0 && i + 1 < line.size() && (line[i] == '.' || line[i] == ')') && line[i + 1] == ' ') {
    return text::trim(line.substr(i + 2));
  }
  return line;
}

std::optional<double> parse_score(std::string_view s) {
  auto str = std::string(text::trim(s));
  if (str.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(str.c_str(), &end);
  if (end != str.c_str() + str.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string temperature_key(double t) { return text::format_number(t, 4); }

std::string batch_lookup_key(const std::string& model, double temperature,
                             std::span<const std::string> batch) {
  std::string key = model + '\x1e' + temperature_key(temperature);
  for (const auto& item : batch) {
    key.push_back('\x1f');
    key += item;
  }
  return key;
}

std::string key_lookup_key(const std::string& model, double temperature, const std::string& item) {
  return model + '\x1e' + temperature_key(temperature) + '\x1f' + item;
}

std::optional<std::string> safe_normalize(std::string_view key) {
  if (text::trim(key).empty()) return std::nullopt;
  return normalize_key(key);
}

SingleRunResult failure(std::string key, double temperature, std::string reason) {
  SingleRunResult r;
  r.key = std::move(key);
  r.temperature = temperature;
  r.explanation = std::move(reason);
  r.parse_ok = false;
  return r;
}

json result_to_json(const SingleRunResult& r) {
  json j;
  j["key"] = r.key;
  j["label"] = r.label ? json(*r.label) : json(nullptr);
  j["confidence"] = r.confidence;
  j["explanation"] = r.explanation;
  j["temperature"] = r.temperature;
  j["parse_ok"] = r.parse_ok;
  return j;
}

SingleRunResult result_from_json(const json& j) {
  SingleRunResult r;
  r.key = j.value("key", "");
  if (j.contains("label") && j.at("label").is_string()) r.label = j.at("label").get<std::string>();
  r.confidence = j.value("confidence", 0.0);
  r.explanation = j.value("explanation", "");
  r.temperature = j.value("temperature", 0.0);
  r.parse_ok = j.value("parse_ok", false);
  return r;
}

std::uint64_t random_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  while (true) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string normalize_key(std::string_view raw) {
  if (raw.empty()) throw ClassifyError("cannot normalize an empty key");
  auto tokens = key_tokens(raw);
  if (tokens.empty()) return text::to_lower(text::trim(raw));
  return text::join(tokens, " ");
}

BaselineMatcher::BaselineMatcher(const Ontology& ont) {
  for (const auto& label : ont.labels()) {
    for (const auto& example : label.examples) {
      // "mac (media access control) address" -> "mac address" + "media access control"
      std::string head;
      std::vector<std::string> inner;
      int depth = 0;
      for (char c : example) {
        if (c == '(') {
          if (depth++ == 0) inner.emplace_back();
          continue;
        }
        if (c == ')' && depth > 0) {
          --depth;
          continue;
        }
        if (depth > 0) inner.back().push_back(c);
        else head.push_back(c);
      }
      std::vector<std::string> variants{head};
      variants.insert(variants.end(), inner.begin(), inner.end());
      for (const auto& v : variants) {
        auto tokens = phrase_tokens(v);
        if (tokens.empty()) continue;
        Form form;
        form.text = text::join(tokens, " ");
        form.tokens = sorted_unique(std::move(tokens));
        form.label = label.name;
        forms_.push_back(std::move(form));
      }
    }
  }
}

std::optional<BaselineMatch> BaselineMatcher::classify(std::string_view key) const {
  if (text::trim(key).empty()) return std::nullopt;
  const auto normalized = normalize_key(key);
  const auto key_set = sorted_unique(phrase_tokens(normalized));
  if (key_set.empty()) return std::nullopt;
  const std::string padded = " " + normalized + " ";

  using Rank = std::tuple<int, std::size_t, long, std::string>;
  std::optional<Rank> best;
  const Form* best_form = nullptr;
  for (const auto& form : forms_) {
    std::optional<Rank> rank;
    if (form.tokens == key_set) {
      rank = Rank{0, 0, -static_cast<long>(form.text.size()), form.label};
    } else if (std::includes(form.tokens.begin(), form.tokens.end(), key_set.begin(),
                             key_set.end())) {
      rank = Rank{1, form.tokens.size() - key_set.size(), -static_cast<long>(form.text.size()),
                  form.label};
    } else {
      // Short forms (acronyms such as "os", "dom", "api") only match whole tokens.
      const bool contained = form.text.size() <= 3
                                 ? padded.find(" " + form.text + " ") != std::string::npos
                                 : normalized.find(form.text) != std::string::npos;
      if (contained) rank = Rank{2, 0, -static_cast<long>(form.text.size()), form.label};
    }
    if (rank && (!best || *rank < *best)) {
      best = rank;
      best_form = &form;
    }
  }
  if (!best_form) return std::nullopt;
  return BaselineMatch{best_form->label, std::get<0>(*best) == 2 ? 0.7 : 1.0, best_form->text};
}

std::optional<BaselineMatch> baseline_classify(std::string_view key, const Ontology& ont) {
  return BaselineMatcher(ont).classify(key);
}

// ---------------------------------------------------------------------------

const std::string_view kClassifierInstruction =
    "You are a text classifier for network traffic payload data. I am going to give you some "
    "categories and examples for each category. Then I will give you text sequences that I want "
    "you to categorize using the provided categories. The input texts were collected from network "
    "traffic payloads. Try to determine the meaning of the input texts and use the similarity of "
    "the categories and input texts to do the classification. For text with acronyms and "
    "abbreviations, use the meaning of the acronyms and abbreviations to do the classification. "
    "Provide an explanation for each classification in 15 words or less. Report a score of "
    "confidence on a scale of 0 to 1 for each categorization. Format your response exactly like "
    "this for each input text: <input text> // <category> // <score> // <explanation>.";

std::string build_prompt_header(const Ontology& ont) {
  std::string out(kClassifierInstruction);
  out += "\n\nCategories:\n";
  for (const auto& label : ont.labels()) {
    out += "- " + label.name + ": " + text::join(label.examples, ", ") + "\n";
  }
  out += "\nInput texts:\n";
  return out;
}

std::string build_prompt(const Ontology& ont, std::span<const std::string> batch,
                         std::size_t max_batch) {
  if (batch.empty()) throw ClassifyError("cannot build a prompt for an empty batch");
  if (batch.size() > max_batch) {
    throw ClassifyError("batch of " + std::to_string(batch.size()) + " exceeds the maximum of " +
                        std::to_string(max_batch));
  }
  auto out = build_prompt_header(ont);
  for (const auto& item : batch) out += item + "\n";
  return out;
}

std::vector<SingleRunResult> parse_llm_response(std::string_view response, const Ontology& ont,
                                                std::span<const std::string> batch,
                                                ResponseDiagnostics* diagnostics) {
  ResponseDiagnostics diag;
  std::vector<std::optional<SingleRunResult>> slots(batch.size());

  std::vector<std::optional<std::string>> normalized_batch;
  for (const auto& k : batch) normalized_batch.push_back(safe_normalize(k));

  auto match_key = [&](std::string_view field) -> std::optional<std::size_t> {
    const auto raw = std::string(text::trim(field));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch[i] == raw) return i;
    }
    const auto unwrapped = strip_wrapping(raw);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (text::iequals(batch[i], unwrapped)) return i;
    }
    if (auto norm = safe_normalize(unwrapped)) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (normalized_batch[i] && *normalized_batch[i] == *norm) return i;
      }
    }
    return std::nullopt;
  };

  for (auto raw_line : text::split(response, '\n')) {
    auto line = strip_list_marker(text::trim(raw_line));
    if (line.empty()) continue;
    ++diag.lines;

    std::vector<std::string_view> fields;
    std::string_view rest = line;
    while (fields.size() < 3) {
      auto sep = rest.find("//");
      if (sep == std::string_view::npos) break;
      fields.push_back(rest.substr(0, sep));
      rest = rest.substr(sep + 2);
    }
    fields.push_back(rest);

    auto index = match_key(fields.front());
    if (!index) {
      ++diag.unmatched_lines;
      if (fields.size() < 4) ++diag.malformed_lines;
      continue;
    }
    auto& slot = slots[*index];
    const bool have_valid = slot && slot->parse_ok;

    std::string problem;
    const DataTypeLabel* label = nullptr;
    std::optional<double> score;
    if (fields.size() < 4) {
      problem = "malformed line: expected 4 fields separated by '//'";
    } else {
      auto label_text = strip_wrapping(fields[1]);
      while (!label_text.empty() && (label_text.back() == '*' || label_text.back() == '.')) {
        label_text.pop_back();
      }
      label = ont.find(label_text);
      score = parse_score(fields[2]);
      if (!label) problem = "label not in ontology: '" + std::string(text::trim(fields[1])) + "'";
      else if (!score) problem = "unparseable score: '" + std::string(text::trim(fields[2])) + "'";
      else if (*score < 0.0 || *score > 1.0) problem = "score outside [0, 1]";
    }
    if (!problem.empty()) {
      ++diag.malformed_lines;
      if (!slot) slot = failure(batch[*index], 0.0, problem);
      continue;
    }
    if (have_valid) continue;
    SingleRunResult ok;
    ok.key = batch[*index];
    ok.label = label->name;
    ok.confidence = *score;
    ok.explanation = std::string(text::trim(fields[3]));
    ok.parse_ok = true;
    slot = std::move(ok);
  }

  std::vector<SingleRunResult> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (slots[i]) {
      out.push_back(std::move(*slots[i]));
    } else {
      ++diag.missing_keys;
      out.push_back(failure(batch[i], 0.0, "no response line for this input"));
    }
  }
  if (diagnostics) *diagnostics = diag;
  return out;
}

// ---------------------------------------------------------------------------

std::unique_ptr<ReplayClient> ReplayClient::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ClassifyError("replay fixture directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  auto client = std::unique_ptr<ReplayClient>(new ReplayClient());
  for (const auto& file : files) {
    std::size_t line_no = 0;
    const auto contents = text::read_file(file);
    for (auto line : text::split(contents, '\n')) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ClassifyError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
      const std::string model = j.value("model", "");
      const double temperature = j.value("temperature", 0.0);
      Entry entry;
      if (j.contains("error")) entry.error = j.at("error").get<std::string>();
      if (j.contains("batch")) {
        if (j.contains("response")) entry.response = j.at("response").get<std::string>();
        auto batch = j.at("batch").get<std::vector<std::string>>();
        client->batches_[batch_lookup_key(model, temperature, batch)] = std::move(entry);
      } else if (j.contains("key")) {
        if (j.contains("line")) entry.response = j.at("line").get<std::string>();
        client->keys_[key_lookup_key(model, temperature, j.at("key").get<std::string>())] =
            std::move(entry);
      } else {
        throw ClassifyError(file.string() + ":" + std::to_string(line_no) +
                            ": fixture needs 'batch' or 'key'");
      }
    }
  }
  return client;
}

std::size_t ReplayClient::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::string ReplayClient::complete(const CompletionRequest& request) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  auto find = [&](const std::map<std::string, Entry>& table, auto make_key) -> const Entry* {
    for (const auto& model : {request.model, std::string()}) {
      if (auto it = table.find(make_key(model)); it != table.end()) return &it->second;
    }
    return nullptr;
  };
  const auto* whole = find(batches_, [&](const std::string& model) {
    return batch_lookup_key(model, request.temperature, request.batch);
  });
  if (whole) {
    if (whole->error) throw TransientClientError("replayed failure: " + *whole->error);
    return whole->response.value_or("");
  }
  std::string response;
  for (const auto& item : request.batch) {
    const auto* entry = find(keys_, [&](const std::string& model) {
      return key_lookup_key(model, request.temperature, item);
    });
    if (!entry) {
      throw FixtureMissingError("no replay fixture for '" + item + "' at temperature " +
                                temperature_key(request.temperature));
    }
    if (entry->error) throw TransientClientError("replayed failure: " + *entry->error);
    if (entry->response) response += *entry->response + "\n";
  }
  return response;
}

RecordingClient::RecordingClient(CompletionClient& inner, std::filesystem::path dir)
    : inner_(inner), file_(std::move(dir) / "recorded.jsonl") {
  std::filesystem::create_directories(file_.parent_path());
}

std::string RecordingClient::complete(const CompletionRequest& request) {
  auto response = inner_.complete(request);
  json j;
  j["model"] = request.model;
  j["temperature"] = request.temperature;
  j["batch"] = request.batch;
  j["prompt_sha256"] = sha256_hex(request.prompt);
  j["response"] = response;
  std::lock_guard lock(mutex_);
  std::ofstream out(file_, std::ios::app | std::ios::binary);
  out << j.dump() << "\n";
  return response;
}

// ---------------------------------------------------------------------------

RunCache RunCache::load(const std::filesystem::path& path) {
  RunCache cache;
  if (path.empty() || !std::filesystem::exists(path)) return cache;
  json doc;
  try {
    doc = json::parse(text::read_file(path));
  } catch (const json::parse_error& e) {
    throw ClassifyError("classification cache " + path.string() + " is corrupt: " + e.what());
  }
  for (const auto& e : doc.value("entries", json::array())) {
    cache.store(e.at("model").get<std::string>(), e.at("temperature").get<double>(),
                e.at("prompt_hash").get<std::string>(), e.at("normalized_key").get<std::string>(),
                result_from_json(e.at("result")));
  }
  return cache;
}

void RunCache::save(const std::filesystem::path& path) const {
  std::lock_guard lock(mutex_);
  json entries = json::array();
  for (const auto& [key, result] : entries_) {
    auto parts = text::split(key, '\x1f');
    json e;
    e["model"] = std::string(parts.at(0));
    e["temperature"] = std::stod(std::string(parts.at(1)));
    e["prompt_hash"] = std::string(parts.at(2));
    e["normalized_key"] = std::string(parts.at(3));
    e["result"] = result_to_json(result);
    entries.push_back(std::move(e));
  }
  json doc;
  doc["version"] = 1;
  doc["entries"] = std::move(entries);
  text::write_file(path, doc.dump(1) + "\n");
}

std::string RunCache::make_key(const std::string& model, double temperature,
                               const std::string& prompt_hash, const std::string& normalized_key) {
  return model + '\x1f' + temperature_key(temperature) + '\x1f' + prompt_hash + '\x1f' +
         normalized_key;
}

std::optional<SingleRunResult> RunCache::find(const std::string& model, double temperature,
                                              const std::string& prompt_hash,
                                              const std::string& normalized_key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(make_key(model, temperature, prompt_hash, normalized_key));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void RunCache::store(const std::string& model, double temperature, const std::string& prompt_hash,
                     const std::string& normalized_key, const SingleRunResult& result) {
  std::lock_guard lock(mutex_);
  entries_[make_key(model, temperature, prompt_hash, normalized_key)] = result;
}

std::size_t RunCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------

std::map<std::string, std::vector<SingleRunResult>> run_ensemble(
    std::span<const std::string> keys, const Ontology& ont, CompletionClient& client,
    const EnsembleConfig& config, RunCache* cache, EnsembleStats* stats) {
  if (config.batch_size == 0) throw ClassifyError("batch size must be positive");
  EnsembleStats local;

  // One representative raw key per normalized form.
  std::set<std::string> distinct;
  for (const auto& k : keys) {
    if (!text::trim(k).empty()) distinct.insert(k);
  }
  std::map<std::string, std::string> representative;  // normalized -> raw
  std::map<std::string, std::string> normalized_of;    // raw -> normalized
  for (const auto& k : distinct) {
    auto norm = normalize_key(k);
    normalized_of[k] = norm;
    representative.emplace(norm, k);
  }

  const auto prompt_hash = sha256_hex(build_prompt_header(ont));
  // results[normalized][temperature index]
  std::map<std::string, std::vector<std::optional<SingleRunResult>>> results;
  for (const auto& [norm, raw] : representative) results[norm].resize(config.temperatures.size());

  struct Job {
    std::size_t temperature_index;
    std::vector<std::string> batch;  // representatives
    std::vector<SingleRunResult> output;
    bool responded = false;
    std::size_t retries = 0;
    std::size_t malformed = 0;
  };
  std::vector<Job> jobs;
  for (std::size_t ti = 0; ti < config.temperatures.size(); ++ti) {
    const double t = config.temperatures[ti];
    std::vector<std::string> pending;
    for (const auto& [norm, raw] : representative) {
      if (cache) {
        if (auto hit = cache->find(config.model, t, prompt_hash, norm)) {
          results[norm][ti] = *hit;
          ++local.cache_hits;
          continue;
        }
      }
      ++local.cache_misses;
      pending.push_back(raw);
    }
    for (std::size_t i = 0; i < pending.size(); i += config.batch_size) {
      Job job;
      job.temperature_index = ti;
      auto end = std::min(pending.size(), i + config.batch_size);
      job.batch.assign(pending.begin() + static_cast<long>(i), pending.begin() + static_cast<long>(end));
      jobs.push_back(std::move(job));
    }
  }

  auto sleep = config.retry.sleep ? config.retry.sleep
                                  : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  std::mutex pace_mutex;
  auto last_call = std::chrono::steady_clock::time_point{};
  auto pace = [&] {
    if (config.retry.min_interval.count() <= 0) return;
    std::lock_guard lock(pace_mutex);
    auto now = std::chrono::steady_clock::now();
    auto ready = last_call + config.retry.min_interval;
    if (last_call.time_since_epoch().count() != 0 && now < ready) {
      sleep(std::chrono::duration_cast<std::chrono::milliseconds>(ready - now));
    }
    last_call = std::chrono::steady_clock::now();
  };

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> calls{0};
  std::mutex error_mutex;
  std::exception_ptr fatal;

  auto worker = [&] {
    while (true) {
      const std::size_t index = next.fetch_add(1);
      if (index >= jobs.size()) return;
      {
        std::lock_guard lock(error_mutex);
        if (fatal) return;
      }
      Job& job = jobs[index];
      const double t = config.temperatures[job.temperature_index];
      CompletionRequest request{config.model, t, build_prompt(ont, job.batch, config.batch_size),
                                job.batch};
      std::string last_error;
      for (int attempt = 0; attempt <= config.retry.max_retries; ++attempt) {
        if (attempt > 0) {
          ++job.retries;
          auto delay = std::chrono::milliseconds(static_cast<long long>(
              static_cast<double>(config.retry.base_delay.count()) *
              std::pow(config.retry.multiplier, attempt - 1)));
          sleep(delay);
        }
        try {
          pace();
          ++calls;
          auto response = client.complete(request);
          ResponseDiagnostics diag;
          job.output = parse_llm_response(response, ont, job.batch, &diag);
          for (auto& r : job.output) r.temperature = t;
          job.malformed = diag.malformed_lines;
          job.responded = true;
          break;
        } catch (const TransientClientError& e) {
          last_error = e.what();
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!fatal) fatal = std::current_exception();
          return;
        }
      }
      if (!job.responded) {
        job.output.clear();
        for (const auto& item : job.batch) {
          job.output.push_back(failure(item, t,
                                       "client failed after " + std::to_string(config.retry.max_retries) +
                                           " retries: " + last_error));
        }
      }
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(config.parallelism, jobs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  for (auto& job : jobs) {
    local.retries += job.retries;
    local.malformed_lines += job.malformed;
    if (!job.responded) ++local.failed_batches;
    const double t = config.temperatures[job.temperature_index];
    for (auto& r : job.output) {
      const auto& norm = normalized_of.at(r.key);
      if (job.responded && cache) cache->store(config.model, t, prompt_hash, norm, r);
      results[norm][job.temperature_index] = r;
    }
  }
  local.calls = calls.load();

  std::map<std::string, std::vector<SingleRunResult>> out;
  for (const auto& k : distinct) {
    auto& per_t = results.at(normalized_of.at(k));
    std::vector<SingleRunResult> runs;
    for (std::size_t ti = 0; ti < per_t.size(); ++ti) {
      SingleRunResult r = per_t[ti].value_or(failure(k, config.temperatures[ti], "not run"));
      r.key = k;
      r.temperature = config.temperatures[ti];
      runs.push_back(std::move(r));
    }
    out.emplace(k, std::move(runs));
  }
  if (stats) {
    stats->calls += local.calls;
    stats->retries += local.retries;
    stats->failed_batches += local.failed_batches;
    stats->cache_hits += local.cache_hits;
    stats->cache_misses += local.cache_misses;
    stats->malformed_lines += local.malformed_lines;
  }
  return out;
}

std::string_view to_string(VoteMode m) {
  return m == VoteMode::majority_max ? "majority_max" : "majority_avg";
}

VoteMode parse_vote_mode(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "max" || v == "majority_max" || v == "majority-max") return VoteMode::majority_max;
  if (v == "avg" || v == "majority_avg" || v == "majority-avg") return VoteMode::majority_avg;
  throw ClassifyError("unknown vote mode '" + std::string(s) + "' (expected max or avg)");
}

std::optional<VotedLabel> majority_vote(std::span<const SingleRunResult> results, VoteMode mode) {
  struct Tally {
    std::size_t count = 0;
    double sum = 0.0;
    double max = 0.0;
  };
  std::map<std::string, Tally> tallies;
  for (const auto& r : results) {
    if (!r.parse_ok || !r.label) continue;
    auto& t = tallies[*r.label];
    t.max = t.count == 0 ? r.confidence : std::max(t.max, r.confidence);
    t.sum += r.confidence;
    ++t.count;
  }
  if (tallies.empty()) return std::nullopt;

  auto aggregate = [mode](const Tally& t) {
    return mode == VoteMode::majority_max ? t.max : t.sum / static_cast<double>(t.count);
  };
  std::size_t top = 0;
  for (const auto& [label, t] : tallies) top = std::max(top, t.count);

  const std::string* winner = nullptr;
  double winner_conf = 0.0;
  std::size_t leaders = 0;
  // std::map iterates labels in ascending order, so '>' keeps the smaller label on equal scores.
  for (const auto& [label, t] : tallies) {
    if (t.count != top) continue;
    ++leaders;
    const double conf = aggregate(t);
    if (!winner || conf > winner_conf) {
      winner = &label;
      winner_conf = conf;
    }
  }
  VotedLabel v;
  v.key = results.front().key;
  v.label = *winner;
  v.confidence = winner_conf;
  v.mode = mode;
  v.support = top;
  v.tied = leaders > 1;
  return v;
}

LabelStatus apply_threshold(const VotedLabel& vote, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ClassifyError("confidence threshold must lie in [0, 1]");
  }
  return vote.confidence >= threshold ? LabelStatus::labeled : LabelStatus::unlabeled;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ClassifierMode m) {
  switch (m) {
    case ClassifierMode::baseline: return "baseline";
    case ClassifierMode::ensemble: return "ensemble";
    case ClassifierMode::baseline_then_ensemble: return "baseline_then_ensemble";
  }
  return "baseline";
}

ClassifierMode parse_classifier_mode(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "baseline") return ClassifierMode::baseline;
  if (v == "ensemble") return ClassifierMode::ensemble;
  if (v == "baseline_then_ensemble") return ClassifierMode::baseline_then_ensemble;
  throw ClassifyError("unknown classifier mode '" + std::string(s) + "'");
}

std::vector<KeyClassification> classify_keys(std::span<const std::string> keys,
                                             const Ontology& ont, const ClassifySettings& settings,
                                             CompletionClient* client, RunCache* cache,
                                             EnsembleStats* stats) {
  std::set<std::string> distinct;
  for (const auto& k : keys) {
    if (!text::trim(k).empty()) distinct.insert(k);
  }
  std::map<std::string, KeyClassification> out;
  std::vector<std::string> for_ensemble;

  const bool use_baseline = settings.mode != ClassifierMode::ensemble;
  const bool use_ensemble = settings.mode != ClassifierMode::baseline;
  if (use_ensemble && !client) throw ClassifyError("ensemble classification needs a client");

  std::optional<BaselineMatcher> matcher;
  if (use_baseline) matcher.emplace(ont);
  for (const auto& k : distinct) {
    KeyClassification kc;
    kc.key = k;
    kc.normalized = normalize_key(k);
    kc.source = "none";
    if (matcher) {
      if (auto m = matcher->classify(k)) {
        VotedLabel v{k, m->label, m->confidence, settings.vote, 1, false};
        kc.labeled = apply_threshold(v, settings.threshold) == LabelStatus::labeled;
        kc.vote = std::move(v);
        kc.source = "baseline";
      }
    }
    if (use_ensemble && !kc.labeled) for_ensemble.push_back(k);
    out.emplace(k, std::move(kc));
  }

  if (!for_ensemble.empty()) {
    auto runs = run_ensemble(for_ensemble, ont, *client, settings.ensemble, cache, stats);
    for (auto& [key, key_runs] : runs) {
      auto& kc = out.at(key);
      kc.runs = std::move(key_runs);
      auto vote = majority_vote(kc.runs, settings.vote);
      if (vote) {
        kc.labeled = apply_threshold(*vote, settings.threshold) == LabelStatus::labeled;
        kc.vote = std::move(vote);
        kc.source = "ensemble";
      } else if (settings.mode == ClassifierMode::ensemble) {
        kc.vote.reset();
        kc.labeled = false;
        kc.source = "none";
      }
    }
  }

  std::vector<KeyClassification> sorted;
  sorted.reserve(out.size());
  for (auto& [k, kc] : out) sorted.push_back(std::move(kc));
  return sorted;
}

// ---------------------------------------------------------------------------

LabeledSample LabeledSample::load_csv(const std::filesystem::path& path, const Ontology& ont) {
  if (!std::filesystem::exists(path)) throw ClassifyError("sample file not found: " + path.string());
  LabeledSample sample;
  std::size_t line_no = 0;
  bool header = true;
  const auto contents = text::read_file(path);
  for (auto line : text::split(contents, '\n')) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto fields = text::parse_csv_line(line);
    if (header) {
      header = false;
      if (fields.size() >= 2 && text::iequals(text::trim(fields[0]), "key")) continue;
    }
    if (fields.size() < 2) {
      throw ClassifyError(path.string() + ":" + std::to_string(line_no) + ": expected key,label");
    }
    const auto* label = ont.find(fields[1]);
    if (!label) {
      throw ClassifyError(path.string() + ":" + std::to_string(line_no) +
                          ": sample label not in ontology: '" + fields[1] + "'");
    }
    sample.items.emplace_back(fields[0], label->name);
  }
  return sample;
}

AccuracyReport validate_against_sample(const LabeledSample& sample, const VotedSet& voted,
                                       std::span<const double> thresholds, std::string method) {
  AccuracyReport report;
  report.method = std::move(method);
  report.total = sample.items.size();
  for (double t : thresholds) report.per_threshold.push_back(ThresholdAccuracy{t, 0, 0, 0.0});
  for (const auto& [key, truth] : sample.items) {
    auto it = voted.find(key);
    if (it == voted.end()) throw ClassifyError("sample key '" + key + "' has no classification");
    const auto& vote = it->second;
    const bool correct = vote && text::iequals(vote->label, truth);
    if (correct) ++report.correct;
    for (auto& row : report.per_threshold) {
      if (!vote || vote->confidence < row.threshold) continue;
      ++row.kept;
      if (correct) ++row.correct;
    }
  }
  report.accuracy = report.total ? static_cast<double>(report.correct) / static_cast<double>(report.total)
                                 : 0.0;
  for (auto& row : report.per_threshold) {
    row.accuracy = row.kept ? static_cast<double>(row.correct) / static_cast<double>(row.kept) : 0.0;
  }
  return report;
}

std::string render_accuracy_table(std::span<const AccuracyReport> rows) {
  auto pad = [](std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
  };
  auto fixed2 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  const std::vector<double> thresholds =
      rows.empty() ? std::vector<double>{}
                   : [&] {
                       std::vector<double> t;
                       for (const auto& r : rows.front().per_threshold) t.push_back(r.threshold);
                       return t;
                     }();
  std::string out;
  out += pad("Temperature", 16) + pad("", 10);
  for (double t : thresholds) out += "| " + pad("Confidence " + text::format_number(t, 2), 20);
  out += "\n" + pad("or Method", 16) + pad("Accuracy", 10);
  for (std::size_t i = 0; i < thresholds.size(); ++i) out += "| " + pad("Accuracy", 10) + pad("Labeled", 10);
  out += "\n";
  for (const auto& r : rows) {
    out += pad(r.method, 16) + pad(fixed2(r.accuracy), 10);
    for (const auto& t : r.per_threshold) {
      out += "| " + pad(fixed2(t.accuracy), 10) + pad(std::to_string(t.kept), 10);
    }
    out += "\n";
  }
  // Trailing spaces are noise in diffs.
  std::string cleaned;
  for (auto line : text::split(out, '\n')) {
    auto l = std::string(line);
    while (!l.empty() && l.back() == ' ') l.pop_back();
    cleaned += l + "\n";
  }
  cleaned.pop_back();
  return cleaned;
}

std::string render_accuracy_csv(std::span<const AccuracyReport> rows) {
  std::string out = "method,total,accuracy";
  if (!rows.empty()) {
    for (const auto& t : rows.front().per_threshold) {
      const auto suffix = text::format_number(t.threshold, 2);
      out += ",accuracy_" + suffix + ",labeled_" + suffix;
    }
  }
  out += "\n";
  for (const auto& r : rows) {
    out += text::csv_field(r.method) + "," + std::to_string(r.total) + "," +
           text::format_number(r.accuracy, 6);
    for (const auto& t : r.per_threshold) {
      out += "," + text::format_number(t.accuracy, 6) + "," + std::to_string(t.kept);
    }
    out += "\n";
  }
  return out;
}

std::vector<std::string> sample_uniform(std::span<const std::string> items, std::size_t n,
                                        std::uint64_t seed) {
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[random_below(rng, i)]);
  }
  order.resize(std::min(n, order.size()));
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  for (auto i : order) out.push_back(items[i]);
  return out;
}

}  // namespace diffaudit
