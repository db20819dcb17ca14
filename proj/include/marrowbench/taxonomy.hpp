#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace marrowbench {

// Lowercased, trimmed, inner whitespace runs collapsed to single spaces.
// All class-name lookups go through this, so "Segmented  neutrophil " and
// "Segmented Neutrophil" are the same class.
std::string normalize_class_name(std::string_view name);

struct TaxonomyNode {
  std::string name;
  std::vector<TaxonomyNode> children;

  bool is_leaf() const { return children.empty(); }
};

// The annotation-time class tree plus the reduction onto the evaluation
// classes. original_leaves are the names annotators used; model_classes is
// the fixed-order class list every metric and score table follows; mapping
// sends each original leaf to its model class.
struct Taxonomy {
  TaxonomyNode root;
  std::vector<std::string> original_leaves;
  std::vector<std::string> model_classes;
  std::unordered_map<std::string, std::string> mapping;  // normalized leaf -> model class

  int32_t n_model_classes() const {
    return static_cast<int32_t>(model_classes.size());
  }
};

// Built-in instance: 49 annotation classes reduced to 33 model classes.
const Taxonomy& default_taxonomy();

// Structural checks: unique normalized names on both lists, mapping total on
// original_leaves with targets inside model_classes, and tree leaves that are
// exactly the original leaves. Throws on the first violation.
void validate_taxonomy(const Taxonomy& t);

Taxonomy load_taxonomy(const std::string& path);
void save_taxonomy(const Taxonomy& t, const std::string& path);

// Model-class index for a (not necessarily normalized) name; -1 if unknown.
int32_t find_model_class(const Taxonomy& t, std::string_view name);

// Same, but throwing on unknown names.
int32_t model_class_index(const Taxonomy& t, std::string_view name);

// Model class an original annotation label lands on. Accepts model-class
// names as well so already-reduced labels pass through unchanged.
std::string map_class(const Taxonomy& t, std::string_view original);

}  // namespace marrowbench
