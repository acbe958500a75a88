#include "diffaudit/ontology.hpp"

#include "diffaudit/error.hpp"
#include "diffaudit/text.hpp"

namespace diffaudit {

namespace {

using nlohmann::json;

const json& require_array(const json& node, const char* key, const std::string& where) {
  if (!node.is_object() || !node.contains(key) || !node.at(key).is_array()) {
    throw OntologyError(where + ": expected array field '" + key + "'");
  }
  return node.at(key);
}

std::string require_name(const json& node, const std::string& where) {
  if (!node.is_object() || !node.contains("name") || !node.at("name").is_string()) {
    throw OntologyError(where + ": missing 'name'");
  }
  auto name = text::normalize_whitespace(node.at("name").get<std::string>());
  if (name.empty()) throw OntologyError(where + ": empty 'name'");
  return name;
}

}  // namespace

std::string_view to_string(LabelKind kind) {
  return kind == LabelKind::identifiers ? kIdentifiersName : kPersonalInformationName;
}

std::string label_key(std::string_view label) {
  return text::to_lower(text::normalize_whitespace(label));
}

Ontology Ontology::from_json(const json& doc) {
  Ontology ont;
  const auto& level1 = require_array(doc, "level1", "ontology");
  if (level1.size() != 2) {
    throw OntologyError("ontology: expected exactly 2 level-1 categories, found " +
                        std::to_string(level1.size()));
  }
  bool seen_identifiers = false;
  bool seen_personal = false;
  for (const auto& l1 : level1) {
    auto l1_name = require_name(l1, "level1");
    LabelKind kind;
    if (l1_name == kIdentifiersName && !seen_identifiers) {
      kind = LabelKind::identifiers;
      seen_identifiers = true;
    } else if (l1_name == kPersonalInformationName && !seen_personal) {
      kind = LabelKind::personal_information;
      seen_personal = true;
    } else {
      throw OntologyError("ontology: level-1 categories must be '" +
                          std::string(kIdentifiersName) + "' and '" +
                          std::string(kPersonalInformationName) + "', got '" + l1_name + "'");
    }
    ont.level1_.push_back(l1_name);

    for (const auto& l2 : require_array(l1, "level2", "level1 '" + l1_name + "'")) {
      Level2Group group;
      group.name = require_name(l2, "level2 under '" + l1_name + "'");
      group.kind = kind;
      auto group_key = label_key(group.name);
      if (ont.level2_index_.count(group_key)) {
        throw OntologyError("ontology: duplicate level-2 category '" + group.name + "'");
      }
      const auto& level3 = require_array(l2, "level3", "level2 '" + group.name + "'");
      for (const auto& l3 : level3) {
        const bool has_examples =
            l3.is_object() && l3.contains("examples") && !l3.at("examples").empty();
        if (has_examples &&
            (!l3.contains("name") || !l3.at("name").is_string() ||
             text::normalize_whitespace(l3.at("name").get<std::string>()).empty())) {
          throw OntologyError("ontology: orphan example(s) under '" + group.name +
                              "' with no level-3 label");
        }
        DataTypeLabel label;
        label.name = require_name(l3, "level3 under '" + group.name + "'");
        label.level2 = group.name;
        label.kind = kind;
        auto key = label_key(label.name);
        if (ont.label_index_.count(key)) {
          throw OntologyError("ontology: duplicate level-3 label '" + label.name + "'");
        }
        if (l3.contains("examples")) {
          if (!l3.at("examples").is_array()) {
            throw OntologyError("ontology: 'examples' of '" + label.name + "' must be an array");
          }
          for (const auto& ex : l3.at("examples")) {
            if (!ex.is_string()) {
              throw OntologyError("ontology: non-string example under '" + label.name + "'");
            }
            auto phrase = text::to_lower(text::normalize_whitespace(ex.get<std::string>()));
            if (phrase.empty()) continue;
            auto [it, inserted] = ont.example_index_.emplace(phrase, ont.labels_.size());
            if (!inserted) {
              const auto& other =
                  it->second == ont.labels_.size() ? label.name : ont.labels_[it->second].name;
              throw OntologyError("ontology: example '" + phrase + "' listed under both '" +
                                  other + "' and '" + label.name + "'");
            }
            label.examples.push_back(std::move(phrase));
          }
        }
        ont.label_index_.emplace(key, ont.labels_.size());
        group.labels.push_back(label.name);
        ont.labels_.push_back(std::move(label));
      }
      if (group.labels.empty()) {
        throw OntologyError("ontology: level-2 category '" + group.name + "' has no labels");
      }
      ont.level2_index_.emplace(group_key, ont.level2_.size());
      ont.level2_.push_back(std::move(group));
    }
  }
  return ont;
}

std::size_t Ontology::example_count() const { return example_index_.size(); }

const DataTypeLabel* Ontology::find(std::string_view label) const {
  auto it = label_index_.find(label_key(label));
  return it == label_index_.end() ? nullptr : &labels_[it->second];
}

const DataTypeLabel& Ontology::label(std::string_view label) const {
  const auto* found = find(label);
  if (!found) throw UnknownLabelError(std::string(label));
  return *found;
}

const Level2Group* Ontology::find_level2(std::string_view name) const {
  auto it = level2_index_.find(label_key(name));
  return it == level2_index_.end() ? nullptr : &level2_[it->second];
}

std::size_t Ontology::level2_index(std::string_view name) const {
  auto it = level2_index_.find(label_key(name));
  if (it == level2_index_.end()) throw UnknownLabelError(std::string(name));
  return it->second;
}

const DataTypeLabel* Ontology::owner_of_example(std::string_view example) const {
  auto it = example_index_.find(text::to_lower(text::normalize_whitespace(example)));
  return it == example_index_.end() ? nullptr : &labels_[it->second];
}

Ontology load_ontology(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw OntologyError("ontology file not found: " + path.string());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw OntologyError("ontology file " + path.string() + " is not valid JSON: " + e.what());
  }
  return Ontology::from_json(doc);
}

}  // namespace diffaudit
