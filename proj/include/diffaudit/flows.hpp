#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffaudit/destinations.hpp"
#include "diffaudit/ingest.hpp"
#include "diffaudit/ontology.hpp"

namespace diffaudit {

enum class TraceCategory { child, adolescent, adult, logged_out };
inline constexpr std::array<TraceCategory, 4> kTraceCategories{
    TraceCategory::child, TraceCategory::adolescent, TraceCategory::adult, TraceCategory::logged_out};

std::string_view to_string(TraceCategory c);
TraceCategory parse_trace_category(std::string_view s);
inline bool is_age_specific(TraceCategory c) { return c != TraceCategory::logged_out; }
/// logged_out traces map to logged_out; the others to their age group.
TraceCategory trace_category_of(const TraceMeta& meta);

enum class Granularity { level2, level3 };
std::string_view to_string(Granularity g);
Granularity parse_granularity(std::string_view s);

/// A <data type category, destination> pair observed in one trace context.
struct DataFlow {
  std::string service;
  TraceCategory trace_category = TraceCategory::logged_out;
  std::optional<TraceKind> trace_kind;  // cleared by merge_age_traces
  std::string category3;
  std::string category2;
  std::string esld;
  DestLabel label = DestLabel::third;
  std::optional<std::string> owner;
  std::set<std::string> fqdns;
  std::set<Platform> platforms;
  std::size_t occurrence_count = 1;
};

/// Destination contacted by a request whose payload could not be inspected.
struct ContactRecord {
  std::string service;
  TraceCategory trace_category = TraceCategory::logged_out;
  std::string esld;
  DestLabel label = DestLabel::third;
  std::optional<std::string> owner;
  std::set<std::string> fqdns;
  std::set<Platform> platforms;
  std::size_t occurrence_count = 1;
};

/// What build_flows needs to know about one request.
struct FlowInput {
  std::string request_id;
  TraceMeta meta;
  bool encrypted = false;
  DestinationRecord dest;
  std::vector<std::string> keys;  // raw keys mined from the payload
};

struct FlowSet {
  std::vector<DataFlow> flows;
  std::vector<ContactRecord> contacts;
};

/// Crosses each request's labeled keys with its destination. `labels` maps a raw key to
/// its level-3 label and holds labeled keys only. Each request adds one occurrence per
/// distinct label. Output sorted by flow identity.
FlowSet build_flows(std::span<const FlowInput> requests,
                    const std::map<std::string, std::string>& labels, const Ontology& ont);

/// Unions account-creation and logged-in flows per age group.
std::vector<DataFlow> merge_age_traces(std::span<const DataFlow> flows);

enum class Presence { absent, web_only, mobile_only, both };
std::string_view to_string(Presence p);
/// Desktop traces count toward the web mark.
Presence presence_of(const std::set<Platform>& platforms);

struct PresenceCell {
  std::string service;
  TraceCategory trace_category = TraceCategory::logged_out;
  std::string category2;
  DestLabel label = DestLabel::third;
  friend auto operator<=>(const PresenceCell&, const PresenceCell&) = default;
};

/// Populated cells only; every other cell is absent.
std::map<PresenceCell, Presence> platform_presence(std::span<const DataFlow> flows);

/// Flow identity within one service and trace category.
struct FlowIdentity {
  std::string category;  // level-2 or level-3 name depending on granularity
  DestLabel label = DestLabel::third;
  std::string esld;
  friend auto operator<=>(const FlowIdentity&, const FlowIdentity&) = default;
};

std::set<FlowIdentity> flow_identities(std::span<const DataFlow> flows, std::string_view service,
                                       TraceCategory category, Granularity granularity);

/// |A ∩ B| / |A ∪ B|; two empty sets are identical (1.0).
double jaccard(const std::set<FlowIdentity>& a, const std::set<FlowIdentity>& b);

struct PairDiff {
  std::string service;
  TraceCategory left = TraceCategory::child;
  TraceCategory right = TraceCategory::adult;
  std::vector<FlowIdentity> only_left;
  std::vector<FlowIdentity> only_right;
  std::size_t left_size = 0;
  std::size_t right_size = 0;
  double jaccard = 1.0;
};

struct DiffReport {
  Granularity granularity = Granularity::level2;
  std::vector<PairDiff> pairs;  // per service: child/adult, adolescent/adult, then each age vs logged_out
};

/// `services` lists every service to report, including ones without flows.
DiffReport diff_age_groups(std::span<const DataFlow> flows, std::span<const std::string> services,
                           Granularity granularity);

// ---------------------------------------------------------------------------
// Declared disclosures and audit rules

struct Disclosure {
  std::string category2;
  DestLabel label = DestLabel::third;
  std::string citation;
};

/// Allowed (level-2 category, destination label) pairs per service and age group.
class DisclosureSet {
 public:
  /// {"<service>": {"child"|"adolescent"|"adult"|"all": [{"category", "dest", "citation"}]}}
  /// optionally wrapped in {"services": ...}. Categories must be level-2 names.
  static DisclosureSet from_json_text(std::string_view text, const Ontology& ont);
  static DisclosureSet load(const std::filesystem::path& path, const Ontology& ont);

  void allow(const std::string& service, TraceCategory age, Disclosure d);
  bool allows(std::string_view service, TraceCategory age, std::string_view category2,
              DestLabel label) const;
  const Disclosure* find(std::string_view service, TraceCategory age, std::string_view category2,
                         DestLabel label) const;
  std::vector<std::string> services() const;
  std::size_t size() const;

 private:
  std::map<std::string, std::map<TraceCategory, std::vector<Disclosure>>> entries_;
};

enum class RuleId { R1_preconsent, R2_minor_ats_sharing, R3_undisclosed, R4_no_age_differentiation };
std::string_view to_string(RuleId r);

enum class Severity { info, low, medium, high };
std::string_view to_string(Severity s);

struct FlowEvidence {
  std::string category3;
  std::string esld;
  DestLabel label = DestLabel::third;
  std::vector<std::string> fqdns;
  std::size_t occurrence_count = 0;
};

struct AuditFinding {
  RuleId rule = RuleId::R1_preconsent;
  Severity severity = Severity::info;
  std::string service;
  std::optional<TraceCategory> trace_category;  // none for R4
  std::string category2;                         // empty for R4
  std::optional<DestLabel> label;
  std::string esld;
  std::vector<FlowEvidence> flows;  // level-3 evidence; empty for R4
  std::optional<double> jaccard_child_adult;
  std::optional<double> jaccard_adolescent_adult;
  std::string explanation;
};

struct AuditOptions {
  double r4_tau = 0.9;
  Granularity granularity = Granularity::level2;
};

/// Evaluates R1-R4 over merged flows. Throws AuditError when `disclosures` names a service
/// outside `services`. Findings are sorted by rule, service, trace category, category, label, eSLD.
std::vector<AuditFinding> audit(std::span<const DataFlow> flows, const DisclosureSet& disclosures,
                                const Ontology& ont, std::span<const std::string> services,
                                const AuditOptions& options = {});

// ---------------------------------------------------------------------------
// Matrix rendering

inline constexpr std::array<DestLabel, 4> kMatrixColumns{DestLabel::first, DestLabel::first_ats,
                                                         DestLabel::third, DestLabel::third_ats};
std::string_view matrix_column_name(DestLabel l);  // "Collect 1st", ..., "Share 3rd ATS"
std::string_view presence_symbol(Presence p);

struct MatrixRow {
  std::string category2;
  std::array<std::array<Presence, 4>, 4> cells{};  // [trace category][column]
};

struct ServiceMatrix {
  std::string service;
  std::vector<MatrixRow> rows;  // every level-2 category in ontology order
};

struct FlowMatrix {
  std::vector<ServiceMatrix> services;
};

FlowMatrix build_matrix(std::span<const DataFlow> flows, const Ontology& ont,
                        std::span<const std::string> services);
std::string render_matrix_text(const FlowMatrix& matrix);
std::string render_matrix_json(const FlowMatrix& matrix);

/// Terminal columns occupied by a UTF-8 string (pictographs count as two).
std::size_t display_width(std::string_view s);

}  // namespace diffaudit
