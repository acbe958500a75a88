#include "diffaudit/linkability.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include <json.hpp>

#include "diffaudit/text.hpp"

namespace diffaudit {

namespace {

using nlohmann::ordered_json;

ordered_json string_array(const auto& items) {
  ordered_json a = ordered_json::array();
  for (const auto& s : items) a.push_back(s);
  return a;
}

}  // namespace

bool is_linkable(const std::set<std::string>& categories, const Ontology& ont) {
  bool identifier = false;
  bool personal = false;
  for (const auto& c : categories) {
    if (ont.label_kind(c) == LabelKind::identifiers) identifier = true;
    else personal = true;
  }
  return identifier && personal;
}

std::vector<LinkabilitySet> linkable_sets(std::span<const DataFlow> flows, const Ontology& ont) {
  std::map<std::tuple<std::string, TraceCategory, std::string>, LinkabilitySet> groups;
  for (const auto& f : flows) {
    if (is_first_party(f.label)) continue;
    auto& s = groups[{f.service, f.trace_category, f.esld}];
    s.service = f.service;
    s.trace_category = f.trace_category;
    s.esld = f.esld;
    s.is_ats = s.is_ats || is_ats(f.label);
    if (!s.owner) s.owner = f.owner;
    s.categories.insert(f.category3);
    s.categories2.insert(f.category2);
    s.fqdns.insert(f.fqdns.begin(), f.fqdns.end());
    s.occurrence_count += f.occurrence_count;
  }
  std::vector<LinkabilitySet> out;
  for (auto& [_, s] : groups) {
    s.linkable = is_linkable(s.categories, ont);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<LinkabilityCount> count_linkable_third_parties(std::span<const LinkabilitySet> sets,
                                                           std::span<const std::string> services) {
  std::vector<LinkabilityCount> out;
  for (const auto& service : services) {
    for (auto c : kTraceCategories) {
      LinkabilityCount row{service, c, 0, 0};
      std::set<std::string> all;
      std::set<std::string> linkable;
      for (const auto& s : sets) {
        if (s.service != service || s.trace_category != c) continue;
        all.insert(s.esld);
        if (s.linkable) linkable.insert(s.esld);
      }
      row.third_parties = all.size();
      row.linkable_third_parties = linkable.size();
      out.push_back(std::move(row));
    }
  }
  return out;
}

SetSummary largest_and_common_sets(std::span<const LinkabilitySet> sets) {
  SetSummary summary;
  std::map<std::pair<std::string, TraceCategory>, LargestSets> cells;
  std::map<std::vector<std::string>, std::size_t> frequency;
  for (const auto& s : sets) {
    if (!s.linkable) continue;
    std::vector<std::string> cats(s.categories.begin(), s.categories.end());
    ++frequency[cats];
    auto& cell = cells[{s.service, s.trace_category}];
    cell.service = s.service;
    cell.trace_category = s.trace_category;
    if (cats.size() > cell.size) {
      cell.size = cats.size();
      cell.members.clear();
    }
    if (cats.size() == cell.size) cell.members.push_back(SetMember{s.esld, std::move(cats)});
  }
  for (auto& [_, cell] : cells) summary.largest.push_back(std::move(cell));

  std::size_t best = 0;
  for (const auto& [cats, count] : frequency) best = std::max(best, count);
  for (const auto& [cats, count] : frequency) {
    if (count == best) summary.most_common.push_back(CommonSet{cats, count});
  }
  return summary;
}

std::vector<OrgRanking> top_ats_orgs(std::span<const LinkabilitySet> sets, std::size_t n) {
  std::map<std::pair<std::string, TraceCategory>, std::map<std::string, std::size_t>> weights;
  for (const auto& s : sets) {
    if (!s.linkable || !s.is_ats) continue;
    weights[{s.service, s.trace_category}][s.owner.value_or(s.esld)] += s.occurrence_count;
  }
  std::vector<OrgRanking> out;
  for (const auto& [cell, orgs] : weights) {
    OrgRanking r;
    r.service = cell.first;
    r.trace_category = cell.second;
    for (const auto& [org, w] : orgs) r.organizations.push_back(OrgWeight{org, w});
    std::stable_sort(r.organizations.begin(), r.organizations.end(),
                     [](const OrgWeight& a, const OrgWeight& b) { return a.weight > b.weight; });
    if (r.organizations.size() > n) r.organizations.resize(n);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CrossContext> cross_context(std::span<const LinkabilitySet> sets) {
  std::map<std::pair<std::string, std::string>, CrossContext> groups;
  std::map<std::pair<std::string, std::string>, std::set<std::string>> categories;
  for (const auto& s : sets) {
    if (!s.linkable) continue;
    auto& g = groups[{s.service, s.esld}];
    g.service = s.service;
    g.esld = s.esld;
    g.trace_categories.push_back(s.trace_category);
    categories[{s.service, s.esld}].insert(s.categories.begin(), s.categories.end());
  }
  std::vector<CrossContext> out;
  for (auto& [key, g] : groups) {
    if (g.trace_categories.size() < 2) continue;
    std::sort(g.trace_categories.begin(), g.trace_categories.end());
    const auto& cats = categories[key];
    g.categories.assign(cats.begin(), cats.end());
    out.push_back(std::move(g));
  }
  return out;
}

std::string render_counts_csv(std::span<const LinkabilityCount> counts) {
  std::string out = "service,trace_category,linkable_third_parties,third_parties\n";
  for (const auto& c : counts) {
    out += text::csv_field(c.service) + "," + std::string(to_string(c.trace_category)) + "," +
           std::to_string(c.linkable_third_parties) + "," + std::to_string(c.third_parties) + "\n";
  }
  return out;
}

std::string render_alluvial_csv(std::span<const OrgRanking> rankings) {
  std::string out = "source,organization,weight\n";
  for (const auto& r : rankings) {
    const auto source = r.service + " / " + std::string(to_string(r.trace_category));
    for (const auto& o : r.organizations) {
      out += text::csv_field(source) + "," + text::csv_field(o.organization) + "," +
             std::to_string(o.weight) + "\n";
    }
  }
  return out;
}

std::string render_sets_json(std::span<const LinkabilitySet> sets, const SetSummary& summary,
                             std::span<const OrgRanking> rankings,
                             std::span<const CrossContext> annex) {
  ordered_json doc;
  doc["sets"] = ordered_json::array();
  for (const auto& s : sets) {
    ordered_json j;
    j["service"] = s.service;
    j["trace_category"] = std::string(to_string(s.trace_category));
    j["esld"] = s.esld;
    j["is_ats"] = s.is_ats;
    j["owner"] = s.owner ? ordered_json(*s.owner) : ordered_json(nullptr);
    j["linkable"] = s.linkable;
    j["categories"] = string_array(s.categories);
    j["categories_level2"] = string_array(s.categories2);
    j["fqdns"] = string_array(s.fqdns);
    j["occurrences"] = s.occurrence_count;
    doc["sets"].push_back(std::move(j));
  }
  doc["largest"] = ordered_json::array();
  for (const auto& l : summary.largest) {
    ordered_json j;
    j["service"] = l.service;
    j["trace_category"] = std::string(to_string(l.trace_category));
    j["size"] = l.size;
    j["members"] = ordered_json::array();
    for (const auto& m : l.members) {
      j["members"].push_back(ordered_json{{"esld", m.esld}, {"categories", string_array(m.categories)}});
    }
    doc["largest"].push_back(std::move(j));
  }
  doc["most_common"] = ordered_json::array();
  for (const auto& c : summary.most_common) {
    doc["most_common"].push_back(
        ordered_json{{"categories", string_array(c.categories)}, {"count", c.count}});
  }
  doc["top_ats_organizations"] = ordered_json::array();
  for (const auto& r : rankings) {
    ordered_json j;
    j["service"] = r.service;
    j["trace_category"] = std::string(to_string(r.trace_category));
    j["organizations"] = ordered_json::array();
    for (const auto& o : r.organizations) {
      j["organizations"].push_back(ordered_json{{"organization", o.organization}, {"weight", o.weight}});
    }
    doc["top_ats_organizations"].push_back(std::move(j));
  }
  doc["cross_context"] = ordered_json::array();
  for (const auto& c : annex) {
    ordered_json cats = ordered_json::array();
    for (auto t : c.trace_categories) cats.push_back(std::string(to_string(t)));
    doc["cross_context"].push_back(ordered_json{{"service", c.service},
                                                {"esld", c.esld},
                                                {"trace_categories", std::move(cats)},
                                                {"categories", string_array(c.categories)}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace diffaudit
