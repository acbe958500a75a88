#include "diffaudit/flows.hpp"

#include <algorithm>
#include <tuple>

#include <json.hpp>

#include "diffaudit/error.hpp"
#include "diffaudit/text.hpp"

namespace diffaudit {

namespace {

using nlohmann::ordered_json;

auto flow_key(const DataFlow& f) {
  return std::make_tuple(std::cref(f.service), f.trace_category, f.trace_kind,
                         std::cref(f.category3), f.label, std::cref(f.esld));
}

auto contact_key(const ContactRecord& c) {
  return std::make_tuple(std::cref(c.service), c.trace_category, c.label, std::cref(c.esld));
}

void absorb(DataFlow& into, const DataFlow& from) {
  into.fqdns.insert(from.fqdns.begin(), from.fqdns.end());
  into.platforms.insert(from.platforms.begin(), from.platforms.end());
  into.occurrence_count += from.occurrence_count;
  if (!into.owner) into.owner = from.owner;
}

std::vector<DataFlow> coalesce(std::vector<DataFlow> flows) {
  std::sort(flows.begin(), flows.end(),
            [](const DataFlow& a, const DataFlow& b) { return flow_key(a) < flow_key(b); });
  std::vector<DataFlow> out;
  for (auto& f : flows) {
    if (!out.empty() && flow_key(out.back()) == flow_key(f)) {
      absorb(out.back(), f);
    } else {
      out.push_back(std::move(f));
    }
  }
  return out;
}

std::string identity_category(const DataFlow& f, Granularity g) {
  return g == Granularity::level2 ? f.category2 : f.category3;
}

std::string format_score(double v) { return text::format_number(v, 4); }

std::string pad_display(std::string s, std::size_t width) {
  const auto w = display_width(s);
  if (w < width) s.append(width - w, ' ');
  return s;
}

std::string rstrip(std::string s) {
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

std::string_view group_title(TraceCategory c) {
  switch (c) {
    case TraceCategory::child: return "Child";
    case TraceCategory::adolescent: return "Adolescent";
    case TraceCategory::adult: return "Adult";
    case TraceCategory::logged_out: return "Logged-out";
  }
  return "";
}

std::string_view short_column(DestLabel l) {
  switch (l) {
    case DestLabel::first: return "1st";
    case DestLabel::first_ats: return "1st ATS";
    case DestLabel::third: return "3rd";
    case DestLabel::third_ats: return "3rd ATS";
  }
  return "";
}

constexpr std::size_t kCellWidth = 7;
constexpr std::size_t kGroupWidth = kCellWidth * 4 + 3;

}  // namespace

std::string_view to_string(TraceCategory c) {
  switch (c) {
    case TraceCategory::child: return "child";
    case TraceCategory::adolescent: return "adolescent";
    case TraceCategory::adult: return "adult";
    case TraceCategory::logged_out: return "logged_out";
  }
  return "logged_out";
}

TraceCategory parse_trace_category(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "child") return TraceCategory::child;
  if (v == "adolescent") return TraceCategory::adolescent;
  if (v == "adult") return TraceCategory::adult;
  if (v == "logged_out" || v == "logged-out") return TraceCategory::logged_out;
  throw Error("unknown trace category '" + std::string(s) + "'");
}

TraceCategory trace_category_of(const TraceMeta& meta) {
  if (meta.trace_kind == TraceKind::logged_out) return TraceCategory::logged_out;
  switch (meta.age_group) {
    case AgeGroup::child: return TraceCategory::child;
    case AgeGroup::adolescent: return TraceCategory::adolescent;
    case AgeGroup::adult: return TraceCategory::adult;
    case AgeGroup::none: break;
  }
  throw IngestError("trace '" + meta.trace_id + "' is " + std::string(to_string(meta.trace_kind)) +
                    " but has no age group");
}

std::string_view to_string(Granularity g) { return g == Granularity::level2 ? "level2" : "level3"; }

Granularity parse_granularity(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "level2") return Granularity::level2;
  if (v == "level3") return Granularity::level3;
  throw Error("unknown granularity '" + std::string(s) + "' (expected level2 or level3)");
}

FlowSet build_flows(std::span<const FlowInput> requests,
                    const std::map<std::string, std::string>& labels, const Ontology& ont) {
  std::vector<DataFlow> flows;
  std::vector<ContactRecord> contacts;
  for (const auto& req : requests) {
    const auto category = trace_category_of(req.meta);
    if (req.encrypted) {
      ContactRecord c;
      c.service = req.meta.service;
      c.trace_category = category;
      c.esld = req.dest.esld;
      c.label = req.dest.label;
      c.owner = req.dest.owner;
      c.fqdns.insert(req.dest.fqdn);
      c.platforms.insert(req.meta.platform);
      contacts.push_back(std::move(c));
      continue;
    }
    std::set<std::string> request_labels;
    for (const auto& key : req.keys) {
      if (auto it = labels.find(key); it != labels.end()) request_labels.insert(it->second);
    }
    for (const auto& label : request_labels) {
      const auto& def = ont.label(label);
      DataFlow f;
      f.service = req.meta.service;
      f.trace_category = category;
      if (category != TraceCategory::logged_out) f.trace_kind = req.meta.trace_kind;
      f.category3 = def.name;
      f.category2 = def.level2;
      f.esld = req.dest.esld;
      f.label = req.dest.label;
      f.owner = req.dest.owner;
      f.fqdns.insert(req.dest.fqdn);
      f.platforms.insert(req.meta.platform);
      flows.push_back(std::move(f));
    }
  }

  std::sort(contacts.begin(), contacts.end(), [](const ContactRecord& a, const ContactRecord& b) {
    return contact_key(a) < contact_key(b);
  });
  std::vector<ContactRecord> merged_contacts;
  for (auto& c : contacts) {
    if (!merged_contacts.empty() && contact_key(merged_contacts.back()) == contact_key(c)) {
      auto& m = merged_contacts.back();
      m.fqdns.insert(c.fqdns.begin(), c.fqdns.end());
      m.platforms.insert(c.platforms.begin(), c.platforms.end());
      m.occurrence_count += c.occurrence_count;
    } else {
      merged_contacts.push_back(std::move(c));
    }
  }
  return FlowSet{coalesce(std::move(flows)), std::move(merged_contacts)};
}

std::vector<DataFlow> merge_age_traces(std::span<const DataFlow> flows) {
  std::vector<DataFlow> out(flows.begin(), flows.end());
  for (auto& f : out) f.trace_kind.reset();
  return coalesce(std::move(out));
}

std::string_view to_string(Presence p) {
  switch (p) {
    case Presence::absent: return "absent";
    case Presence::web_only: return "web_only";
    case Presence::mobile_only: return "mobile_only";
    case Presence::both: return "both";
  }
  return "absent";
}

Presence presence_of(const std::set<Platform>& platforms) {
  const bool web = platforms.contains(Platform::web) || platforms.contains(Platform::desktop);
  const bool mobile = platforms.contains(Platform::mobile);
  if (web && mobile) return Presence::both;
  if (web) return Presence::web_only;
  if (mobile) return Presence::mobile_only;
  return Presence::absent;
}

std::map<PresenceCell, Presence> platform_presence(std::span<const DataFlow> flows) {
  std::map<PresenceCell, std::set<Platform>> platforms;
  for (const auto& f : flows) {
    auto& p = platforms[PresenceCell{f.service, f.trace_category, f.category2, f.label}];
    p.insert(f.platforms.begin(), f.platforms.end());
  }
  std::map<PresenceCell, Presence> out;
  for (const auto& [cell, p] : platforms) out.emplace(cell, presence_of(p));
  return out;
}

std::set<FlowIdentity> flow_identities(std::span<const DataFlow> flows, std::string_view service,
                                       TraceCategory category, Granularity granularity) {
  std::set<FlowIdentity> out;
  for (const auto& f : flows) {
    if (f.service == service && f.trace_category == category) {
      out.insert(FlowIdentity{identity_category(f, granularity), f.label, f.esld});
    }
  }
  return out;
}

double jaccard(const std::set<FlowIdentity>& a, const std::set<FlowIdentity>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& x : a) common += b.contains(x) ? 1 : 0;
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

DiffReport diff_age_groups(std::span<const DataFlow> flows, std::span<const std::string> services,
                           Granularity granularity) {
  static constexpr std::pair<TraceCategory, TraceCategory> kPairs[] = {
      {TraceCategory::child, TraceCategory::adult},
      {TraceCategory::adolescent, TraceCategory::adult},
      {TraceCategory::child, TraceCategory::logged_out},
      {TraceCategory::adolescent, TraceCategory::logged_out},
      {TraceCategory::adult, TraceCategory::logged_out},
  };
  DiffReport report;
  report.granularity = granularity;
  for (const auto& service : services) {
    std::map<TraceCategory, std::set<FlowIdentity>> sets;
    for (auto c : kTraceCategories) sets[c] = flow_identities(flows, service, c, granularity);
    for (const auto& [l, r] : kPairs) {
      const auto& a = sets[l];
      const auto& b = sets[r];
      PairDiff d;
      d.service = service;
      d.left = l;
      d.right = r;
      std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(d.only_left));
      std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(d.only_right));
      d.left_size = a.size();
      d.right_size = b.size();
      d.jaccard = jaccard(a, b);
      report.pairs.push_back(std::move(d));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

DisclosureSet DisclosureSet::from_json_text(std::string_view text, const Ontology& ont) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw AuditError(std::string("disclosures are not valid JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("services")) doc = doc.at("services");
  if (!doc.is_object()) throw AuditError("disclosures must be an object keyed by service");
  DisclosureSet set;
  for (const auto& [service, ages] : doc.items()) {
    if (!ages.is_object()) throw AuditError("disclosures for '" + service + "' must be an object");
    set.entries_[service];
    for (const auto& [age_name, pairs] : ages.items()) {
      std::vector<TraceCategory> targets;
      if (text::iequals(age_name, "all")) {
        targets = {TraceCategory::child, TraceCategory::adolescent, TraceCategory::adult};
      } else {
        TraceCategory age;
        try {
          age = parse_trace_category(age_name);
        } catch (const Error&) {
          throw AuditError("disclosures for '" + service + "': unknown age group '" + age_name + "'");
        }
        if (!is_age_specific(age)) {
          throw AuditError("disclosures for '" + service + "' cannot cover logged-out traces");
        }
        targets = {age};
      }
      for (const auto& p : pairs) {
        const auto category = p.at("category").get<std::string>();
        const auto* group = ont.find_level2(category);
        if (!group) {
          throw AuditError("disclosures for '" + service + "': '" + category +
                           "' is not a level-2 category");
        }
        DestLabel label;
        try {
          label = parse_dest_label(p.at("dest").get<std::string>());
        } catch (const Error& e) {
          throw AuditError("disclosures for '" + service + "': " + e.what());
        }
        for (auto age : targets) {
          set.allow(service, age, Disclosure{group->name, label, p.value("citation", "")});
        }
      }
    }
  }
  return set;
}

DisclosureSet DisclosureSet::load(const std::filesystem::path& path, const Ontology& ont) {
  if (!std::filesystem::exists(path)) throw AuditError("disclosures file not found: " + path.string());
  try {
    return from_json_text(text::read_file(path), ont);
  } catch (const AuditError& e) {
    throw AuditError(path.string() + ": " + e.what());
  }
}

void DisclosureSet::allow(const std::string& service, TraceCategory age, Disclosure d) {
  auto& list = entries_[service][age];
  for (const auto& existing : list) {
    if (existing.label == d.label && text::iequals(existing.category2, d.category2)) return;
  }
  list.push_back(std::move(d));
}

const Disclosure* DisclosureSet::find(std::string_view service, TraceCategory age,
                                      std::string_view category2, DestLabel label) const {
  auto s = entries_.find(std::string(service));
  if (s == entries_.end()) return nullptr;
  auto a = s->second.find(age);
  if (a == s->second.end()) return nullptr;
  for (const auto& d : a->second) {
    if (d.label == label && text::iequals(d.category2, category2)) return &d;
  }
  return nullptr;
}

bool DisclosureSet::allows(std::string_view service, TraceCategory age, std::string_view category2,
                           DestLabel label) const {
  return find(service, age, category2, label) != nullptr;
}

std::vector<std::string> DisclosureSet::services() const {
  std::vector<std::string> out;
  for (const auto& [s, _] : entries_) out.push_back(s);
  return out;
}

std::size_t DisclosureSet::size() const {
  std::size_t n = 0;
  for (const auto& [s, ages] : entries_) {
    for (const auto& [a, list] : ages) n += list.size();
  }
  return n;
}

std::string_view to_string(RuleId r) {
  switch (r) {
    case RuleId::R1_preconsent: return "R1_preconsent";
    case RuleId::R2_minor_ats_sharing: return "R2_minor_ats_sharing";
    case RuleId::R3_undisclosed: return "R3_undisclosed";
    case RuleId::R4_no_age_differentiation: return "R4_no_age_differentiation";
  }
  return "";
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::info: return "info";
    case Severity::low: return "low";
    case Severity::medium: return "medium";
    case Severity::high: return "high";
  }
  return "info";
}

std::vector<AuditFinding> audit(std::span<const DataFlow> flows, const DisclosureSet& disclosures,
                                const Ontology& ont, std::span<const std::string> services,
                                const AuditOptions& options) {
  for (const auto& s : disclosures.services()) {
    if (std::find(services.begin(), services.end(), s) == services.end()) {
      throw AuditError("disclosures name unknown service '" + s + "'");
    }
  }
  if (!(options.r4_tau >= 0.0 && options.r4_tau <= 1.0)) {
    throw AuditError("R4 similarity threshold must lie in [0, 1]");
  }

  // Group level-3 flows under their level-2 identity.
  struct Group {
    std::string service;
    TraceCategory category;
    std::string category2;
    DestLabel label;
    std::string esld;
    std::vector<const DataFlow*> flows;
  };
  std::map<std::tuple<std::string, TraceCategory, std::size_t, DestLabel, std::string>, Group> groups;
  for (const auto& f : flows) {
    auto key = std::make_tuple(f.service, f.trace_category, ont.level2_index(f.category2), f.label,
                               f.esld);
    auto& g = groups[key];
    if (g.flows.empty()) g = Group{f.service, f.trace_category, f.category2, f.label, f.esld, {}};
    g.flows.push_back(&f);
  }

  auto evidence = [](const Group& g) {
    std::map<std::string, FlowEvidence> by_label;
    for (const auto* f : g.flows) {
      auto& e = by_label[f->category3];
      e.category3 = f->category3;
      e.esld = f->esld;
      e.label = f->label;
      for (const auto& q : f->fqdns) {
        if (std::find(e.fqdns.begin(), e.fqdns.end(), q) == e.fqdns.end()) e.fqdns.push_back(q);
      }
      e.occurrence_count += f->occurrence_count;
    }
    std::vector<FlowEvidence> out;
    for (auto& [_, e] : by_label) {
      std::sort(e.fqdns.begin(), e.fqdns.end());
      out.push_back(std::move(e));
    }
    return out;
  };
  auto make = [&](RuleId rule, Severity severity, const Group& g, std::string explanation) {
    AuditFinding f;
    f.rule = rule;
    f.severity = severity;
    f.service = g.service;
    f.trace_category = g.category;
    f.category2 = g.category2;
    f.label = g.label;
    f.esld = g.esld;
    f.flows = evidence(g);
    f.explanation = std::move(explanation);
    return f;
  };

  std::vector<AuditFinding> findings;
  for (const auto& [key, g] : groups) {
    const auto dest = std::string(to_string(g.label));
    if (g.category == TraceCategory::logged_out) {
      Severity sev = Severity::info;
      switch (g.label) {
        case DestLabel::third_ats: sev = Severity::high; break;
        case DestLabel::third: sev = Severity::medium; break;
        case DestLabel::first_ats: sev = Severity::low; break;
        case DestLabel::first: sev = Severity::info; break;
      }
      findings.push_back(make(RuleId::R1_preconsent, sev, g,
                              g.category2 + " sent to " + dest + " destination " + g.esld +
                                  " before the user disclosed an age"));
      continue;
    }
    if ((g.category == TraceCategory::child || g.category == TraceCategory::adolescent) &&
        g.label == DestLabel::third_ats) {
      findings.push_back(make(RuleId::R2_minor_ats_sharing, Severity::high, g,
                              g.category2 + " shared with third-party ATS " + g.esld + " in a " +
                                  std::string(to_string(g.category)) + " trace"));
    }
    if (!disclosures.allows(g.service, g.category, g.category2, g.label)) {
      findings.push_back(make(RuleId::R3_undisclosed, Severity::medium, g,
                              "(" + g.category2 + ", " + dest + ") is not among the disclosed " +
                                  std::string(to_string(g.category)) + " data flows"));
    }
  }

  for (const auto& service : services) {
    auto child = flow_identities(flows, service, TraceCategory::child, options.granularity);
    auto teen = flow_identities(flows, service, TraceCategory::adolescent, options.granularity);
    auto adult = flow_identities(flows, service, TraceCategory::adult, options.granularity);
    if (child.empty() || teen.empty() || adult.empty()) continue;
    const double j_child = jaccard(child, adult);
    const double j_teen = jaccard(teen, adult);
    if (j_child >= options.r4_tau && j_teen >= options.r4_tau) {
      AuditFinding f;
      f.rule = RuleId::R4_no_age_differentiation;
      f.severity = Severity::medium;
      f.service = service;
      f.jaccard_child_adult = j_child;
      f.jaccard_adolescent_adult = j_teen;
      f.explanation = "child/adult similarity " + format_score(j_child) +
                      " and adolescent/adult similarity " + format_score(j_teen) + " are at least " +
                      format_score(options.r4_tau);
      findings.push_back(std::move(f));
    }
  }

  auto order = [&ont](const AuditFinding& f) {
    return std::make_tuple(f.rule, f.service, f.trace_category,
                           f.category2.empty() ? 0 : ont.level2_index(f.category2), f.label, f.esld);
  };
  std::stable_sort(findings.begin(), findings.end(),
                   [&](const AuditFinding& a, const AuditFinding& b) { return order(a) < order(b); });
  return findings;
}

// ---------------------------------------------------------------------------

std::string_view matrix_column_name(DestLabel l) {
  switch (l) {
    case DestLabel::first: return "Collect 1st";
    case DestLabel::first_ats: return "Collect 1st ATS";
    case DestLabel::third: return "Share 3rd";
    case DestLabel::third_ats: return "Share 3rd ATS";
  }
  return "";
}

std::string_view presence_symbol(Presence p) {
  switch (p) {
    case Presence::both: return "•";
    case Presence::absent: return "—";
    case Presence::web_only: return "\U0001F5B1";
    case Presence::mobile_only: return "\U0001F4F1";
  }
  return "";
}

std::size_t display_width(std::string_view s) {
  std::size_t width = 0;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    char32_t cp = c;
    if (c >= 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else if (c >= 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if (c >= 0xC0) {
      len = 2;
      cp = c & 0x1F;
    }
    for (std::size_t k = 1; k < len && i + k < s.size(); ++k) {
      cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    }
    width += cp >= 0x1F000 ? 2 : 1;
    i += len;
  }
  return width;
}

FlowMatrix build_matrix(std::span<const DataFlow> flows, const Ontology& ont,
                        std::span<const std::string> services) {
  const auto presence = platform_presence(flows);
  FlowMatrix matrix;
  for (const auto& service : services) {
    ServiceMatrix sm;
    sm.service = service;
    for (const auto& group : ont.level2()) {
      MatrixRow row;
      row.category2 = group.name;
      for (std::size_t c = 0; c < kTraceCategories.size(); ++c) {
        for (std::size_t col = 0; col < kMatrixColumns.size(); ++col) {
          auto it = presence.find(PresenceCell{service, kTraceCategories[c], group.name, kMatrixColumns[col]});
          row.cells[c][col] = it == presence.end() ? Presence::absent : it->second;
        }
      }
      sm.rows.push_back(std::move(row));
    }
    matrix.services.push_back(std::move(sm));
  }
  return matrix;
}

std::string render_matrix_text(const FlowMatrix& matrix) {
  std::size_t label_width = std::string_view("Data type").size();
  for (const auto& sm : matrix.services) {
    for (const auto& row : sm.rows) label_width = std::max(label_width, display_width(row.category2));
  }
  auto line = [&](const std::string& label, const std::array<std::string, 4>& groups) {
    std::string out = pad_display(label, label_width);
    for (const auto& g : groups) out += " | " + g;
    return rstrip(out) + "\n";
  };
  auto cells = [](const std::array<std::string, 4>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
      out += i + 1 < values.size() ? pad_display(values[i], kCellWidth) + " " : values[i];
    }
    return pad_display(out, kGroupWidth);
  };

  std::array<std::string, 4> titles;
  std::array<std::string, 4> halves;
  std::array<std::string, 4> columns;
  for (std::size_t c = 0; c < 4; ++c) {
    titles[c] = pad_display(std::string(group_title(kTraceCategories[c])), kGroupWidth);
    halves[c] = pad_display(pad_display("Collect", kCellWidth * 2 + 2) + "Share", kGroupWidth);
    columns[c] = cells({std::string(short_column(kMatrixColumns[0])),
                        std::string(short_column(kMatrixColumns[1])),
                        std::string(short_column(kMatrixColumns[2])),
                        std::string(short_column(kMatrixColumns[3]))});
  }
  std::string rule(label_width, '-');
  for (int c = 0; c < 4; ++c) rule += "-+-" + std::string(kGroupWidth, '-');

  std::string out;
  for (const auto& sm : matrix.services) {
    out += sm.service + "\n";
    out += line("", titles);
    out += line("", halves);
    out += line("Data type", columns);
    out += rule + "\n";
    for (const auto& row : sm.rows) {
      std::array<std::string, 4> groups;
      for (std::size_t c = 0; c < 4; ++c) {
        std::array<std::string, 4> symbols;
        for (std::size_t col = 0; col < 4; ++col) symbols[col] = presence_symbol(row.cells[c][col]);
        groups[c] = cells(symbols);
      }
      out += line(row.category2, groups);
    }
    out += "\n";
  }
  out += "Legend: " + std::string(presence_symbol(Presence::both)) + " web and mobile; " +
         std::string(presence_symbol(Presence::web_only)) + " web only; " +
         std::string(presence_symbol(Presence::mobile_only)) + " mobile only; " +
         std::string(presence_symbol(Presence::absent)) + " not observed\n";
  out += "Collect = first-party destinations; Share = third-party destinations.\n";
  out += "First-party destinations on a blocklist appear only under Collect 1st ATS.\n";
  return out;
}

std::string render_matrix_json(const FlowMatrix& matrix) {
  ordered_json doc;
  doc["columns"] = ordered_json::array();
  for (auto l : kMatrixColumns) doc["columns"].push_back(std::string(matrix_column_name(l)));
  doc["legend"] = ordered_json::object();
  for (auto p : {Presence::both, Presence::web_only, Presence::mobile_only, Presence::absent}) {
    doc["legend"][std::string(to_string(p))] = std::string(presence_symbol(p));
  }
  doc["services"] = ordered_json::array();
  for (const auto& sm : matrix.services) {
    ordered_json s;
    s["service"] = sm.service;
    s["rows"] = ordered_json::array();
    for (const auto& row : sm.rows) {
      ordered_json r;
      r["category"] = row.category2;
      ordered_json groups = ordered_json::object();
      for (std::size_t c = 0; c < 4; ++c) {
        ordered_json cols = ordered_json::object();
        for (std::size_t col = 0; col < 4; ++col) {
          cols[std::string(matrix_column_name(kMatrixColumns[col]))] = std::string(to_string(row.cells[c][col]));
        }
        groups[std::string(to_string(kTraceCategories[c]))] = std::move(cols);
      }
      r["cells"] = std::move(groups);
      s["rows"].push_back(std::move(r));
    }
    doc["services"].push_back(std::move(s));
  }
  doc["note"] = "First-party destinations on a blocklist appear only under Collect 1st ATS.";
  return doc.dump(2) + "\n";
}

}  // namespace diffaudit
