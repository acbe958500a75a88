#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace diffaudit {

/// Level-1 ancestor of a data type label.
enum class LabelKind { identifiers, personal_information };

std::string_view to_string(LabelKind kind);

inline constexpr std::string_view kIdentifiersName = "Identifiers";
inline constexpr std::string_view kPersonalInformationName = "Personal Information";

/// A level-3 classification label with its ancestry and level-4 example phrases.
struct DataTypeLabel {
  std::string name;
  std::string level2;
  LabelKind kind = LabelKind::identifiers;
  std::vector<std::string> examples;  // lowercase, whitespace-normalized
};

struct Level2Group {
  std::string name;
  LabelKind kind = LabelKind::identifiers;
  std::vector<std::string> labels;  // level-3 names in file order
};

/// The four-level data type ontology. Immutable after construction.
///
/// Label lookups are case-insensitive and ignore surrounding whitespace;
/// internal punctuation is significant ("Gender/Sex" != "Gender Sex").
class Ontology {
 public:
  /// Builds and validates an ontology from its JSON document form.
  /// Throws OntologyError on any schema or invariant violation.
  static Ontology from_json(const nlohmann::json& doc);

  const std::vector<std::string>& level1() const { return level1_; }
  const std::vector<Level2Group>& level2() const { return level2_; }
  const std::vector<DataTypeLabel>& labels() const { return labels_; }
  std::size_t example_count() const;

  /// Returns nullptr when the label is unknown.
  const DataTypeLabel* find(std::string_view label) const;
  /// Throws UnknownLabelError when the label is unknown.
  const DataTypeLabel& label(std::string_view label) const;
  bool contains(std::string_view label) const { return find(label) != nullptr; }

  /// Canonical spelling of a label as written in the ontology file.
  const std::string& canonical(std::string_view label) const { return this->label(label).name; }

  const std::string& abstract_to_level2(std::string_view label) const {
    return this->label(label).level2;
  }
  LabelKind label_kind(std::string_view label) const { return this->label(label).kind; }

  const Level2Group* find_level2(std::string_view name) const;
  /// Position of a level-2 group in file order; used for report row order.
  std::size_t level2_index(std::string_view name) const;

  /// The example phrase's owning label, or nullptr.
  const DataTypeLabel* owner_of_example(std::string_view example) const;

 private:
  std::vector<std::string> level1_;
  std::vector<Level2Group> level2_;
  std::vector<DataTypeLabel> labels_;
  std::unordered_map<std::string, std::size_t> label_index_;    // lowercase name -> labels_
  std::unordered_map<std::string, std::size_t> level2_index_;   // lowercase name -> level2_
  std::unordered_map<std::string, std::size_t> example_index_;  // example -> labels_
};

Ontology load_ontology(const std::filesystem::path& path);

/// Canonical key used for case-insensitive label comparison.
std::string label_key(std::string_view label);

}  // namespace diffaudit
