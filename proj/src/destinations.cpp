#include "diffaudit/destinations.hpp"

#include <algorithm>
#include <cctype>

#include <json.hpp>

#include "diffaudit/error.hpp"
#include "diffaudit/hash.hpp"
#include "diffaudit/text.hpp"

namespace diffaudit {

namespace {

bool is_ipv4(std::string_view host) {
  auto parts = text::split(host, '.');
  if (parts.size() != 4) return false;
  for (auto p : parts) {
    if (p.empty() || p.size() > 3) return false;
    if (!std::all_of(p.begin(), p.end(), [](unsigned char c) { return std::isdigit(c); })) {
      return false;
    }
    if (std::stoi(std::string(p)) > 255) return false;
  }
  return true;
}

bool is_ip_literal_token(std::string_view token) {
  return is_ipv4(token) || token.find(':') != std::string_view::npos;
}

// Strips one leading label; empty when none is left.
std::string_view parent_domain(std::string_view name) {
  auto dot = name.find('.');
  return dot == std::string_view::npos ? std::string_view{} : name.substr(dot + 1);
}

}  // namespace

Host extract_fqdn(std::string_view url) {
  auto trimmed = text::trim(url);
  auto scheme_end = trimmed.find("://");
  if (scheme_end == std::string_view::npos || scheme_end == 0) {
    throw DestinationError("unparseable URL (no scheme): '" + std::string(url) + "'");
  }
  auto rest = trimmed.substr(scheme_end + 3);
  auto authority = rest.substr(0, rest.find_first_of("/?#"));
  if (auto at = authority.rfind('@'); at != std::string_view::npos) {
    authority = authority.substr(at + 1);
  }
  Host host;
  if (!authority.empty() && authority.front() == '[') {
    auto close = authority.find(']');
    if (close == std::string_view::npos) {
      throw DestinationError("unparseable URL (bad IPv6 literal): '" + std::string(url) + "'");
    }
    host.name = text::to_lower(authority.substr(1, close - 1));
    host.is_ip = true;
    return host;
  }
  auto colon = authority.find(':');
  auto name = authority.substr(0, colon);
  while (!name.empty() && name.back() == '.') name.remove_suffix(1);
  if (name.empty()) throw DestinationError("unparseable URL (empty host): '" + std::string(url) + "'");
  host.name = text::to_lower(name);
  host.is_ip = is_ipv4(host.name);
  return host;
}

PublicSuffixList PublicSuffixList::parse(std::string_view text, bool include_private) {
  PublicSuffixList psl;
  bool in_private = false;
  for (auto raw : text::split(text, '\n')) {
    auto line = text::trim(raw);
    if (line.starts_with("//")) {
      if (line.find("===BEGIN PRIVATE DOMAINS===") != std::string_view::npos) in_private = true;
      if (line.find("===END PRIVATE DOMAINS===") != std::string_view::npos) in_private = false;
      continue;
    }
    if (line.empty() || (in_private && !include_private)) continue;
    // Rules end at the first whitespace.
    line = line.substr(0, line.find_first_of(" \t"));
    auto rule = text::to_lower(line);
    if (rule.starts_with("!")) {
      psl.exceptions_.insert(rule.substr(1));
    } else if (rule.starts_with("*.")) {
      psl.wildcards_.insert(rule.substr(2));
    } else {
      psl.rules_.insert(rule);
    }
  }
  return psl;
}

PublicSuffixList PublicSuffixList::load(const std::filesystem::path& path, bool include_private) {
  if (!std::filesystem::exists(path)) {
    throw DestinationError("public suffix list not found: " + path.string());
  }
  return parse(text::read_file(path), include_private);
}

std::string PublicSuffixList::public_suffix(std::string_view fqdn) const {
  std::string name = text::to_lower(fqdn);
  while (!name.empty() && name.back() == '.') name.pop_back();
  // An exception rule prevails over every other match and makes the name
  // registrable: the suffix is its parent.
  for (std::string_view c = name; !c.empty(); c = parent_domain(c)) {
    if (exceptions_.count(std::string(c))) return std::string(parent_domain(c));
  }
  // Otherwise walk from the full name towards the TLD; the first (longest) match wins.
  std::string_view candidate = name;
  while (!candidate.empty()) {
    const std::string key(candidate);
    if (rules_.count(key)) return key;
    auto parent = parent_domain(candidate);
    if (!parent.empty() && wildcards_.count(std::string(parent))) return key;
    candidate = parent;
  }
  // Implicit "*" rule: the last label is a suffix.
  auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(dot + 1);
}

bool PublicSuffixList::is_public_suffix(std::string_view fqdn) const {
  std::string name = text::to_lower(fqdn);
  while (!name.empty() && name.back() == '.') name.pop_back();
  return public_suffix(name) == name;
}

std::string PublicSuffixList::registrable_domain(std::string_view fqdn) const {
  std::string name = text::to_lower(fqdn);
  while (!name.empty() && name.back() == '.') name.pop_back();
  if (name.empty()) throw DestinationError("empty domain name");
  const auto suffix = public_suffix(name);
  if (suffix.size() >= name.size()) {
    throw DestinationError("'" + name + "' is a public suffix and has no registrable domain");
  }
  // name ends with "." + suffix; take one more label.
  auto head = std::string_view(name).substr(0, name.size() - suffix.size() - 1);
  auto dot = head.rfind('.');
  return dot == std::string_view::npos ? name : name.substr(dot + 1);
}

std::string extract_esld(const Host& host, const PublicSuffixList& psl) {
  if (host.is_ip || is_ip_literal_token(host.name)) {
    throw DestinationError("'" + host.name + "' is an IP literal, not a domain name");
  }
  return psl.registrable_domain(host.name);
}

std::string extract_esld(std::string_view fqdn, const PublicSuffixList& psl) {
  return extract_esld(Host{text::to_lower(fqdn), is_ipv4(fqdn)}, psl);
}

EntityMap EntityMap::from_json_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DestinationError(std::string("entity map is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw DestinationError("entity map must be a JSON object");
  EntityMap map;
  for (const auto& [key, value] : doc.items()) {
    if (value.is_string()) {
      map.set(key, value.get<std::string>());
    } else if (value.is_object() && value.contains("properties")) {
      for (const auto& prop : value.at("properties")) {
        if (prop.is_string()) map.set(prop.get<std::string>(), key);
      }
    } else {
      throw DestinationError("entity map entry '" + key + "' has an unsupported shape");
    }
  }
  return map;
}

EntityMap EntityMap::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DestinationError("entity map not found: " + path.string());
  }
  return from_json_text(text::read_file(path));
}

void EntityMap::set(std::string esld, std::string organization) {
  owners_[text::to_lower(text::trim(esld))] = std::move(organization);
}

void EntityMap::merge(const EntityMap& overrides) {
  for (const auto& [esld, org] : overrides.owners_) owners_[esld] = org;
}

std::optional<std::string> EntityMap::owner(std::string_view esld) const {
  auto it = owners_.find(text::to_lower(esld));
  if (it == owners_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> resolve_owner(std::string_view esld, const EntityMap& map) {
  return map.owner(esld);
}

std::string_view to_string(Party p) { return p == Party::first ? "first" : "third"; }

std::string_view to_string(DestLabel l) {
  switch (l) {
    case DestLabel::first: return "first";
    case DestLabel::first_ats: return "first_ats";
    case DestLabel::third: return "third";
    case DestLabel::third_ats: return "third_ats";
  }
  return "third";
}

DestLabel parse_dest_label(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "first") return DestLabel::first;
  if (v == "first_ats") return DestLabel::first_ats;
  if (v == "third") return DestLabel::third;
  if (v == "third_ats") return DestLabel::third_ats;
  throw DestinationError("unknown destination label '" + std::string(s) + "'");
}

DestLabel make_label(Party party, bool ats) {
  if (party == Party::first) return ats ? DestLabel::first_ats : DestLabel::first;
  return ats ? DestLabel::third_ats : DestLabel::third;
}

Party classify_party(std::string_view esld, const std::optional<std::string>& owner,
                     const ServiceProfile& profile) {
  const auto domain = text::to_lower(esld);
  for (const auto& fp : profile.first_party_eslds) {
    if (text::to_lower(fp) == domain) return Party::first;
  }
  if (owner) {
    const auto org = text::to_lower(text::trim(*owner));
    for (const auto& o : profile.owner_orgs) {
      if (text::to_lower(text::trim(o)) == org) return Party::first;
    }
  }
  return Party::third;
}

Blocklist Blocklist::parse(std::string_view text, std::string name) {
  Blocklist list;
  list.name_ = std::move(name);
  list.sha256_ = sha256_hex(text);
  for (auto raw : text::split(text, '\n')) {
    auto line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    auto space = line.find_first_of(" \t");
    if (space == std::string_view::npos) {
      auto domain = text::to_lower(line);
      while (!domain.empty() && domain.back() == '.') domain.pop_back();
      if (!domain.empty() && !is_ip_literal_token(domain)) list.suffix_.insert(domain);
      continue;
    }
    auto first = line.substr(0, space);
    if (!is_ip_literal_token(first)) continue;  // not a hosts line
    // A hosts line may name several hosts after the address.
    auto rest = text::trim(line.substr(space));
    for (auto token : text::split(rest, ' ')) {
      auto host = text::to_lower(text::trim(token));
      while (!host.empty() && host.back() == '.') host.pop_back();
      if (host.empty() || is_ip_literal_token(host) || host == "localhost" ||
          host == "localhost.localdomain" || host == "broadcasthost" || host == "local") {
        continue;
      }
      list.exact_.insert(host);
    }
  }
  return list;
}

Blocklist Blocklist::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DestinationError("blocklist not found: " + path.string());
  }
  std::string contents;
  try {
    contents = text::read_file(path);
  } catch (const Error& e) {
    throw DestinationError(std::string("unreadable blocklist: ") + e.what());
  }
  return parse(contents, path.filename().string());
}

bool Blocklist::blocks(std::string_view fqdn) const {
  auto name = text::to_lower(fqdn);
  if (exact_.count(name)) return true;
  std::string_view candidate = name;
  while (!candidate.empty()) {
    if (suffix_.count(std::string(candidate))) return true;
    candidate = parent_domain(candidate);
  }
  return false;
}

bool match_ats(std::string_view fqdn, const std::vector<Blocklist>& blocklists) {
  return std::any_of(blocklists.begin(), blocklists.end(),
                     [&](const Blocklist& list) { return list.blocks(fqdn); });
}

DestinationRecord categorize_destination(std::string_view url, const ServiceProfile& profile,
                                         const PublicSuffixList& psl, const EntityMap& map,
                                         const std::vector<Blocklist>& blocklists) {
  auto host = extract_fqdn(url);
  DestinationRecord rec;
  rec.fqdn = host.name;
  if (host.is_ip || is_ip_literal_token(host.name)) {
    rec.esld = host.name;
    rec.is_ip = true;
    rec.party = Party::third;
    rec.ats = false;
    rec.label = DestLabel::third;
    return rec;
  }
  if (psl.is_public_suffix(host.name)) {
    // A bare suffix host has no registrable domain; keep it whole.
    rec.esld = host.name;
  } else {
    rec.esld = psl.registrable_domain(host.name);
  }
  rec.owner = resolve_owner(rec.esld, map);
  rec.party = classify_party(rec.esld, rec.owner, profile);
  rec.ats = match_ats(rec.fqdn, blocklists);
  rec.label = make_label(rec.party, rec.ats);
  return rec;
}

DestinationRecord DestinationCategorizer::categorize(std::string_view url,
                                                     const ServiceProfile& profile) const {
  const auto host = extract_fqdn(url);
  std::string key = profile.name;
  key.push_back('\n');
  key += host.name;
  {
    std::lock_guard lock(mutex_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  }
  auto rec = categorize_destination(url, profile, psl_, map_, blocklists_);
  std::lock_guard lock(mutex_);
  memo_.emplace(std::move(key), rec);
  return rec;
}

}  // namespace diffaudit
