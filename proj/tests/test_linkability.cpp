#include <doctest.h>

#include <filesystem>
#include <random>

#include "diffaudit/linkability.hpp"

using namespace diffaudit;

namespace {

const Ontology& ont() {
  static const Ontology o = load_ontology(std::filesystem::path(DIFFAUDIT_SOURCE_DIR) / "data/ontology.json");
  return o;
}

DataFlow flow(std::string service, TraceCategory cat, std::string category3, DestLabel label, std::string esld,
              std::size_t occurrences = 1, std::optional<std::string> owner = std::nullopt) {
  DataFlow f;
  f.service = std::move(service);
  f.trace_category = cat;
  f.category3 = category3;
  f.category2 = ont().abstract_to_level2(category3);
  f.label = label;
  f.esld = esld;
  f.fqdns = {"x." + esld};
  f.occurrence_count = occurrences;
  f.owner = std::move(owner);
  return f;
}

constexpr auto kChild = TraceCategory::child;
constexpr auto kAdult = TraceCategory::adult;

}  // namespace

TEST_SUITE("linkability") {

TEST_CASE("linkable means an identifier plus personal information") {
  CHECK(is_linkable({"Aliases", "Age"}, ont()));
  CHECK_FALSE(is_linkable({"Aliases", "Device Information"}, ont()));
  CHECK_FALSE(is_linkable({"Age", "Language"}, ont()));
  CHECK_FALSE(is_linkable({}, ont()));
}

TEST_CASE("sets cover third parties only") {
  const std::vector<DataFlow> flows{
      flow("S", kChild, "Aliases", DestLabel::third_ats, "ads.com", 2, "Ads Inc."),
      flow("S", kChild, "Age", DestLabel::third_ats, "ads.com", 1, "Ads Inc."),
      flow("S", kChild, "Aliases", DestLabel::first, "s.com"),
      flow("S", kChild, "Age", DestLabel::first_ats, "s.com"),
      flow("S", kChild, "Language", DestLabel::third, "cdn.net"),
  };
  auto sets = linkable_sets(flows, ont());
  REQUIRE(sets.size() == 2);
  CHECK(sets[0].esld == "ads.com");
  CHECK(sets[0].linkable);
  CHECK(sets[0].is_ats);
  CHECK(sets[0].occurrence_count == 3);
  CHECK(sets[0].categories2 == std::set<std::string>{"Personal Identifiers", "Personal Characteristics"});
  CHECK_FALSE(sets[1].linkable);

  const std::vector<std::string> services{"S", "Quiet"};
  auto counts = count_linkable_third_parties(sets, services);
  REQUIRE(counts.size() == 8);
  CHECK(counts[0].linkable_third_parties == 1);
  CHECK(counts[0].third_parties == 2);
  CHECK(counts[4].service == "Quiet");
  CHECK(counts[4].third_parties == 0);
  CHECK(render_counts_csv(counts).rfind("service,trace_category,linkable_third_parties,third_parties\nS,child,1,2\n", 0) ==
        0);
}

TEST_CASE("largest and most common sets list ties") {
  const std::vector<DataFlow> flows{
      flow("S", kChild, "Aliases", DestLabel::third, "a.com"), flow("S", kChild, "Age", DestLabel::third, "a.com"),
      flow("S", kChild, "Aliases", DestLabel::third, "b.com"), flow("S", kChild, "Age", DestLabel::third, "b.com"),
      flow("S", kChild, "Name", DestLabel::third, "c.com"),    flow("S", kChild, "Language", DestLabel::third, "c.com"),
      flow("S", kAdult, "Name", DestLabel::third, "c.com"),    flow("S", kAdult, "Language", DestLabel::third, "c.com"),
      flow("S", kAdult, "Age", DestLabel::third, "c.com"),
  };
  const auto sets = linkable_sets(flows, ont());
  const auto summary = largest_and_common_sets(sets);
  REQUIRE(summary.largest.size() == 2);
  CHECK(summary.largest[0].trace_category == kChild);
  CHECK(summary.largest[0].size == 2);
  CHECK(summary.largest[0].members.size() == 3);
  CHECK(summary.largest[1].size == 3);
  REQUIRE(summary.most_common.size() == 1);
  CHECK(summary.most_common[0].categories == std::vector<std::string>{"Age", "Aliases"});
  CHECK(summary.most_common[0].count == 2);

  auto annex = cross_context(sets);
  REQUIRE(annex.size() == 1);
  CHECK(annex[0].esld == "c.com");
  CHECK(annex[0].trace_categories == std::vector<TraceCategory>{kChild, kAdult});
  CHECK(annex[0].categories == std::vector<std::string>{"Age", "Language", "Name"});
}

TEST_CASE("top ATS organizations") {
  const std::vector<DataFlow> flows{
      flow("S", kChild, "Aliases", DestLabel::third_ats, "g1.com", 2, "Google LLC"),
      flow("S", kChild, "Age", DestLabel::third_ats, "g1.com", 1, "Google LLC"),
      flow("S", kChild, "Aliases", DestLabel::third_ats, "g2.com", 4, "Google LLC"),
      flow("S", kChild, "Age", DestLabel::third_ats, "g2.com", 1, "Google LLC"),
      flow("S", kChild, "Aliases", DestLabel::third_ats, "solo.io", 3),
      flow("S", kChild, "Age", DestLabel::third_ats, "solo.io", 4),
      flow("S", kChild, "Aliases", DestLabel::third, "plain.com", 9),
      flow("S", kChild, "Age", DestLabel::third, "plain.com", 9),
  };
  const auto sets = linkable_sets(flows, ont());
  auto ranking = top_ats_orgs(sets, 10);
  REQUIRE(ranking.size() == 1);
  REQUIRE(ranking[0].organizations.size() == 2);
  CHECK(ranking[0].organizations[0].organization == "Google LLC");
  CHECK(ranking[0].organizations[0].weight == 8);
  CHECK(ranking[0].organizations[1].organization == "solo.io");
  CHECK(top_ats_orgs(sets, 1)[0].organizations.size() == 1);
  CHECK(render_alluvial_csv(ranking) == "source,organization,weight\nS / child,Google LLC,8\nS / child,solo.io,7\n");
}

TEST_CASE("property: counts agree with the sets") {
  std::mt19937 rng(99);
  const std::vector<std::string> cats{"Aliases", "Age", "Name", "Language", "Device Information", "Contacts"};
  const std::vector<DestLabel> labels{DestLabel::first, DestLabel::first_ats, DestLabel::third, DestLabel::third_ats};
  const std::vector<std::string> services{"S"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<DataFlow> flows;
    for (int i = 0; i < 12; ++i) {
      const auto d = rng() % 4;
      flows.push_back(flow("S", kTraceCategories[rng() % 4], cats[rng() % cats.size()], labels[d],
                           "d" + std::to_string(d) + ".com"));
    }
    const auto sets = linkable_sets(flows, ont());
    const auto counts = count_linkable_third_parties(sets, services);
    std::size_t total = 0;
    for (const auto& c : counts) {
      CHECK(c.linkable_third_parties <= c.third_parties);
      total += c.third_parties;
    }
    CHECK(total == sets.size());
    for (const auto& s : sets) {
      CHECK(s.esld != "d0.com");
      CHECK(s.esld != "d1.com");
      CHECK(s.linkable == is_linkable(s.categories, ont()));
      CHECK(s.is_ats == (s.esld == "d3.com"));
    }
  }
}

}
