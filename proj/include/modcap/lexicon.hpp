#pragma once

#include <array>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "modcap/vocab.hpp"

namespace modcap {

enum class Category { kObject, kColor, kCount, kSize, kSpatial, kSemantic };

/// Attribute modules in their fixed slot order. Slot kNumModules is the
/// initial-estimate slot of the module attention.
inline constexpr std::size_t kNumModules = 5;
inline constexpr std::size_t kInitSlot = kNumModules;
inline constexpr std::array<Category, kNumModules> kModuleCategories = {
    Category::kColor, Category::kCount, Category::kSize, Category::kSpatial, Category::kSemantic};
inline const std::array<std::string, kNumModules> kModuleNames = {"color", "count", "size", "spatial", "semantic"};

inline std::string category_name(Category c) {
  switch (c) {
    case Category::kObject: return "object";
    case Category::kColor: return "color";
    case Category::kCount: return "count";
    case Category::kSize: return "size";
    case Category::kSpatial: return "spatial";
    case Category::kSemantic: return "semantic";
  }
  return "?";
}

inline Category parse_category(const std::string& s) {
  for (auto c : {Category::kObject, Category::kColor, Category::kCount, Category::kSize, Category::kSpatial,
                 Category::kSemantic})
    if (category_name(c) == s) return c;
  throw ContractError("unknown subcategory '" + s + "'");
}

inline std::size_t module_slot(Category c) {
  for (std::size_t m = 0; m < kNumModules; ++m)
    if (kModuleCategories[m] == c) return m;
  throw ContractError("'" + category_name(c) + "' is not an attribute module");
}

inline std::string plural_of(const std::string& noun) { return noun + "s"; }

/// The six disjoint word lists. Objects are stored as base nouns; their
/// regular plurals (noun + "s") belong to the object set as well.
class SubcategoryLexicon {
 public:
  SubcategoryLexicon() = default;
  SubcategoryLexicon(std::vector<std::string> objects, std::array<std::vector<std::string>, kNumModules> attributes)
      : objects_(std::move(objects)), attributes_(std::move(attributes)) {
    validate();
  }

  const std::vector<std::string>& objects() const { return objects_; }
  const std::vector<std::string>& labels(std::size_t module) const { return attributes_.at(module); }
  const std::vector<std::string>& labels(Category c) const { return attributes_.at(module_slot(c)); }
  std::size_t num_objects() const { return objects_.size(); }
  std::size_t num_labels(std::size_t module) const { return attributes_.at(module).size(); }

  /// Every surface token of the object set.
  std::vector<std::string> object_set() const {
    std::vector<std::string> out;
    for (const auto& o : objects_) {
      out.push_back(o);
      out.push_back(plural_of(o));
    }
    return out;
  }

  /// Base-noun index of an object token (singular or plural).
  std::optional<std::size_t> object_index(const std::string& tok) const {
    for (std::size_t i = 0; i < objects_.size(); ++i)
      if (objects_[i] == tok || plural_of(objects_[i]) == tok) return i;
    return std::nullopt;
  }

  std::optional<std::size_t> label_index(std::size_t module, const std::string& tok) const {
    const auto& l = attributes_.at(module);
    for (std::size_t i = 0; i < l.size(); ++i)
      if (l[i] == tok) return i;
    return std::nullopt;
  }

  std::optional<Category> category_of(const std::string& tok) const {
    if (object_index(tok)) return Category::kObject;
    for (std::size_t m = 0; m < kNumModules; ++m)
      if (label_index(m, tok)) return kModuleCategories[m];
    return std::nullopt;
  }

  /// Throws if any two sets share a token or any set is empty.
  void validate() const {
    std::set<std::string> seen;
    auto take = [&](const std::vector<std::string>& words, const std::string& set) {
      if (words.empty()) throw ContractError("lexicon: '" + set + "' set is empty");
      for (const auto& w : words)
        if (!seen.insert(w).second) throw ContractError("lexicon: token '" + w + "' appears in more than one set");
    };
    take(object_set(), "object");
    for (std::size_t m = 0; m < kNumModules; ++m) take(attributes_[m], kModuleNames[m]);
  }

  /// Throws unless every token of every set is in the vocabulary.
  void check_in(const Vocabulary& vocab) const {
    auto check = [&](const std::vector<std::string>& words) {
      for (const auto& w : words)
        if (!vocab.contains(w)) throw ContractError("lexicon token '" + w + "' is not in the vocabulary");
    };
    check(object_set());
    for (const auto& a : attributes_) check(a);
  }

  /// All tokens of all six sets (object surfaces included).
  std::vector<std::string> all_tokens() const {
    auto out = object_set();
    for (const auto& a : attributes_) out.insert(out.end(), a.begin(), a.end());
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["object"] = objects_;
    for (std::size_t m = 0; m < kNumModules; ++m) j[kModuleNames[m]] = attributes_[m];
    return j;
  }

  static SubcategoryLexicon from_json(const nlohmann::json& j) {
    std::array<std::vector<std::string>, kNumModules> attrs;
    for (std::size_t m = 0; m < kNumModules; ++m) {
      if (!j.contains(kModuleNames[m])) throw ContractError("lexicon: missing list '" + kModuleNames[m] + "'");
      attrs[m] = j.at(kModuleNames[m]).get<std::vector<std::string>>();
    }
    if (!j.contains("object")) throw ContractError("lexicon: missing list 'object'");
    return SubcategoryLexicon(j.at("object").get<std::vector<std::string>>(), std::move(attrs));
  }

  bool operator==(const SubcategoryLexicon&) const = default;

 private:
  std::vector<std::string> objects_;
  std::array<std::vector<std::string>, kNumModules> attributes_;
};

/// Desk-scale inventories: 12 objects, 6 colors, counts one..four (one is
/// spoken as the article "a"), 2 sizes, 3 spatial and 4 semantic relations.
inline SubcategoryLexicon default_lexicon() {
  return SubcategoryLexicon(
      {"cat", "dog", "bird", "horse", "cow", "car", "boat", "bike", "table", "chair", "ball", "kite"},
      {{{"red", "green", "blue", "yellow", "white", "black"},
        {"a", "two", "three", "four"},
        {"small", "large"},
        {"on", "near", "under"},
        {"sitting", "standing", "running", "flying"}}});
}

inline void save_lexicon(const std::string& path, const SubcategoryLexicon& lex) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << lex.to_json().dump(2) << '\n';
}

inline SubcategoryLexicon load_lexicon(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open lexicon '" + path + "'");
  return SubcategoryLexicon::from_json(nlohmann::json::parse(is));
}

}  // namespace modcap
