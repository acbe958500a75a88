#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace diffaudit {

struct Host {
  std::string name;  // lowercase, port and trailing dot stripped
  bool is_ip = false;
};

/// Extracts the host of an absolute URL. Throws DestinationError if unparseable.
Host extract_fqdn(std::string_view url);

/// Public suffix list with normal, wildcard ("*.ck") and exception ("!www.ck") rules.
class PublicSuffixList {
 public:
  /// `include_private` also loads the PRIVATE DOMAINS section.
  static PublicSuffixList parse(std::string_view text, bool include_private = false);
  static PublicSuffixList load(const std::filesystem::path& path, bool include_private = false);

  /// Longest matching public suffix; the implicit "*" rule applies when nothing matches.
  std::string public_suffix(std::string_view fqdn) const;
  bool is_public_suffix(std::string_view fqdn) const;
  /// Registrable domain: one label beyond the public suffix.
  /// Throws DestinationError when the name is itself a public suffix.
  std::string registrable_domain(std::string_view fqdn) const;

  std::size_t rule_count() const { return rules_.size() + wildcards_.size() + exceptions_.size(); }

 private:
  std::unordered_set<std::string> rules_;
  std::unordered_set<std::string> wildcards_;   // stored without the "*." prefix
  std::unordered_set<std::string> exceptions_;  // stored without the "!"
};

/// Registrable domain of `host`; IP literals throw DestinationError.
std::string extract_esld(const Host& host, const PublicSuffixList& psl);
std::string extract_esld(std::string_view fqdn, const PublicSuffixList& psl);

/// eSLD -> organization. Accepts either a flat {"esld": "Org"} object or the
/// Tracker Radar entity map ({"Org": {"displayName": ..., "properties": [...]}}); the entity key is the organization.
class EntityMap {
 public:
  static EntityMap from_json_text(std::string_view text);
  static EntityMap load(const std::filesystem::path& path);

  void set(std::string esld, std::string organization);
  /// Entries of `overrides` replace existing ones.
  void merge(const EntityMap& overrides);
  std::optional<std::string> owner(std::string_view esld) const;
  std::size_t size() const { return owners_.size(); }

 private:
  std::map<std::string, std::string> owners_;
};

std::optional<std::string> resolve_owner(std::string_view esld, const EntityMap& map);

struct ServiceProfile {
  std::string name;
  std::vector<std::string> first_party_eslds;  // lowercase
  std::vector<std::string> owner_orgs;         // lowercase
};

enum class Party { first, third };
enum class DestLabel { first, first_ats, third, third_ats };

std::string_view to_string(Party p);
std::string_view to_string(DestLabel l);
DestLabel parse_dest_label(std::string_view s);
DestLabel make_label(Party party, bool ats);
inline bool is_first_party(DestLabel l) { return l == DestLabel::first || l == DestLabel::first_ats; }
inline bool is_ats(DestLabel l) { return l == DestLabel::first_ats || l == DestLabel::third_ats; }

Party classify_party(std::string_view esld, const std::optional<std::string>& owner,
                     const ServiceProfile& profile);

/// One blocklist file. Lines of the form "<ip> <domain>" are hosts entries
/// (exact FQDN match); bare domains are suffix rules (domain or any subdomain).
/// '#' starts a comment.
class Blocklist {
 public:
  static Blocklist parse(std::string_view text, std::string name = {});
  static Blocklist load(const std::filesystem::path& path);

  bool blocks(std::string_view fqdn) const;
  const std::string& name() const { return name_; }
  const std::string& sha256() const { return sha256_; }
  std::size_t size() const { return exact_.size() + suffix_.size(); }

 private:
  std::string name_;
  std::string sha256_;
  std::unordered_set<std::string> exact_;
  std::unordered_set<std::string> suffix_;
};

/// True iff any list blocks the FQDN.
bool match_ats(std::string_view fqdn, const std::vector<Blocklist>& blocklists);

struct DestinationRecord {
  std::string fqdn;
  std::string esld;
  std::optional<std::string> owner;
  Party party = Party::third;
  bool ats = false;
  DestLabel label = DestLabel::third;
  bool is_ip = false;
};

DestinationRecord categorize_destination(std::string_view url, const ServiceProfile& profile,
                                         const PublicSuffixList& psl, const EntityMap& map,
                                         const std::vector<Blocklist>& blocklists);

/// Categorizer over fixed reference data with a per-(service, host) memo.
/// The memo is transparent: results equal categorize_destination.
class DestinationCategorizer {
 public:
  DestinationCategorizer(const PublicSuffixList& psl, const EntityMap& map,
                         const std::vector<Blocklist>& blocklists)
      : psl_(psl), map_(map), blocklists_(blocklists) {}

  DestinationRecord categorize(std::string_view url, const ServiceProfile& profile) const;

 private:
  const PublicSuffixList& psl_;
  const EntityMap& map_;
  const std::vector<Blocklist>& blocklists_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, DestinationRecord> memo_;
};

}  // namespace diffaudit
