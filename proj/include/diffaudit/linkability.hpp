#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "diffaudit/flows.hpp"
#include "diffaudit/ontology.hpp"

namespace diffaudit {

/// Level-3 categories one third-party eSLD received in one service and trace category.
struct LinkabilitySet {
  std::string service;
  TraceCategory trace_category = TraceCategory::logged_out;
  std::string esld;
  bool is_ats = false;
  std::optional<std::string> owner;
  std::set<std::string> categories;   // level-3
  std::set<std::string> categories2;  // level-2 rollup
  std::set<std::string> fqdns;
  std::size_t occurrence_count = 0;
  bool linkable = false;
};

/// At least one Identifiers label and one Personal Information label.
bool is_linkable(const std::set<std::string>& categories, const Ontology& ont);

/// Third-party flows grouped by (service, trace category, eSLD). First parties are excluded.
/// Sorted by service, trace category, eSLD.
std::vector<LinkabilitySet> linkable_sets(std::span<const DataFlow> flows, const Ontology& ont);

struct LinkabilityCount {
  std::string service;
  TraceCategory trace_category = TraceCategory::logged_out;
  std::size_t linkable_third_parties = 0;
  std::size_t third_parties = 0;
};

/// One row per (service, trace category) for every listed service, zero rows included.
std::vector<LinkabilityCount> count_linkable_third_parties(std::span<const LinkabilitySet> sets,
                                                           std::span<const std::string> services);

struct SetMember {
  std::string esld;
  std::vector<std::string> categories;
};

struct LargestSets {
  std::string service;
  TraceCategory trace_category = TraceCategory::logged_out;
  std::size_t size = 0;
  std::vector<SetMember> members;  // every linkable set of the maximum size
};

struct CommonSet {
  std::vector<std::string> categories;
  std::size_t count = 0;  // linkable destinations receiving exactly this set
};

struct SetSummary {
  std::vector<LargestSets> largest;  // cells without linkable sets are omitted
  std::vector<CommonSet> most_common;  // every modal set when tied
};

SetSummary largest_and_common_sets(std::span<const LinkabilitySet> sets);

struct OrgWeight {
  std::string organization;
  std::size_t weight = 0;
};

struct OrgRanking {
  std::string service;
  TraceCategory trace_category = TraceCategory::logged_out;
  std::vector<OrgWeight> organizations;  // weight desc, then name
};

/// Linkable ATS sets ranked by summed occurrence per owning organization (eSLD when unknown).
std::vector<OrgRanking> top_ats_orgs(std::span<const LinkabilitySet> sets, std::size_t n);

struct CrossContext {
  std::string service;
  std::string esld;
  std::vector<TraceCategory> trace_categories;
  std::vector<std::string> categories;  // union over those trace categories
};

/// Third parties that received linkable data in more than one trace category of a service.
std::vector<CrossContext> cross_context(std::span<const LinkabilitySet> sets);

std::string render_counts_csv(std::span<const LinkabilityCount> counts);
std::string render_alluvial_csv(std::span<const OrgRanking> rankings);
std::string render_sets_json(std::span<const LinkabilitySet> sets, const SetSummary& summary,
                             std::span<const OrgRanking> rankings,
                             std::span<const CrossContext> annex);

}  // namespace diffaudit
