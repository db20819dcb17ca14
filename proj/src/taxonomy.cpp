#include "marrowbench/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <json.hpp>

#include "marrowbench/error.hpp"
#include "marrowbench/io.hpp"

namespace marrowbench {

std::string normalize_class_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  bool in_space = true;  // leading whitespace is dropped
  for (char ch : name) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

namespace {

struct Lineage {
  const char* name;
  std::vector<const char*> leaves;
};

// Annotation-time classes by lineage; 49 leaves in total.
const std::vector<Lineage>& lineages() {
  static const std::vector<Lineage> v = {
      {"Myelopoiesis",
       {"Myeloid Precursor Cell", "Myelocytic Blast", "Promyelocyte",
        "Neutrophilic Myelocyte", "Degranulated Neutrophilic Myelocyte",
        "Neutrophilic Metamyelocyte", "Degranulated Neutrophilic Metamyelocyte",
        "Neutrophilic Band", "Segmented Neutrophil"}},
      {"Eosinopoiesis",
       {"Eosinophilic Myelocyte", "Eosinophilic Metamyelocyte",
        "Eosinophilic Band", "Segmented Eosinophil"}},
      {"Basopoiesis",
       {"Basophilic Myelocyte", "Basophilic Metamyelocyte", "Basophilic Band",
        "Segmented Basophil"}},
      {"Monopoiesis",
       {"Promonocyte", "Immature Monocyte", "Monocytic Blast", "Monocyte"}},
      {"Lymphopoiesis",
       {"Prolymphocyte", "Lymphoid Precursor Cell", "Lymphocytic Blast",
        "Lymphocyte"}},
      {"Erythropoiesis",
       {"Proerythroblast", "Basophilic Erythroblast",
        "Polychromatic Erythroblast", "Orthochromatic Erythroblast",
        "Erythrocyte"}},
      {"Thrombopoiesis",
       {"Megakaryocyte", "Micromegakaryocyte", "Promegakaryocyte",
        "Thrombocyte", "Thrombocyte Aggregate", "Giant Platelet"}},
      {"Other Findings",
       {"Plasma Cell", "Macrophage", "Lymphoidocyte", "Phagocytosis",
        "Pseudo Gaucher Cell", "Mitosis", "Neutrophil Extracellular Trap",
        "Spicule", "Smudge Cell", "Unknown Blast"}},
      {"Non-cellular",
       {"Artifact", "Damaged Cell", "Technically Unfit"}},
  };
  return v;
}

// Evaluation classes in their canonical column order.
const std::vector<const char*>& model_class_order() {
  static const std::vector<const char*> v = {
      "Myeloid Precursor Cell",
      "Myelocytic Blast",
      "Promyelocyte",
      "Neutrophilic Myelocyte",
      "Neutrophilic Metamyelocyte",
      "Neutrophilic Band",
      "Segmented Neutrophil",
      "Eosinophilic Myelocyte",
      "Eosinophilic Metamyelocyte",
      "Eosinophilic Band",
      "Segmented Eosinophil",
      "Immature Basophil",
      "Segmented Basophil",
      "Immature Monocyte",
      "Monocytic Blast",
      "Monocyte",
      "Immature Lymphocyte",
      "Lymphocytic Blast",
      "Lymphocyte",
      "Proerythroblast or Basophilic Erythroblast",
      "Polychromatic Erythroblast",
      "Orthochromatic Erythroblast",
      "Megakaryocyte",
      "Thrombocyte",
      "Giant Platelet",
      "Neutrophil Extracellular Trap",
      "Pseudo Gaucher Cell",
      "Mitosis",
      "Spicule",
      "Other Cell",
      "Smudge Cell",
      "Artifact",
      "Not Identifiable",
  };
  return v;
}

// Leaves whose model class differs from their own name.
const std::vector<std::pair<const char*, const char*>>& merge_rules() {
  static const std::vector<std::pair<const char*, const char*>> v = {
      {"Degranulated Neutrophilic Myelocyte", "Neutrophilic Myelocyte"},
      {"Degranulated Neutrophilic Metamyelocyte", "Neutrophilic Metamyelocyte"},
      {"Basophilic Myelocyte", "Immature Basophil"},
      {"Basophilic Metamyelocyte", "Immature Basophil"},
      {"Basophilic Band", "Immature Basophil"},
      {"Promonocyte", "Immature Monocyte"},
      {"Prolymphocyte", "Immature Lymphocyte"},
      {"Lymphoid Precursor Cell", "Immature Lymphocyte"},
      {"Proerythroblast", "Proerythroblast or Basophilic Erythroblast"},
      {"Basophilic Erythroblast", "Proerythroblast or Basophilic Erythroblast"},
      {"Thrombocyte Aggregate", "Thrombocyte"},
      {"Erythrocyte", "Other Cell"},
      {"Plasma Cell", "Other Cell"},
      {"Macrophage", "Other Cell"},
      {"Lymphoidocyte", "Other Cell"},
      {"Phagocytosis", "Other Cell"},
      {"Micromegakaryocyte", "Other Cell"},
      {"Promegakaryocyte", "Other Cell"},
      {"Damaged Cell", "Not Identifiable"},
      {"Technically Unfit", "Not Identifiable"},
      {"Unknown Blast", "Not Identifiable"},
  };
  return v;
}

Taxonomy build_default() {
  Taxonomy t;
  t.root.name = "Bone Marrow Cell";
  for (const Lineage& lin : lineages()) {
    TaxonomyNode group;
    group.name = lin.name;
    for (const char* leaf : lin.leaves) {
      group.children.push_back({leaf, {}});
      t.original_leaves.push_back(leaf);
    }
    t.root.children.push_back(std::move(group));
  }
  for (const char* c : model_class_order()) t.model_classes.push_back(c);

  std::unordered_map<std::string, std::string> merged;
  for (const auto& [leaf, target] : merge_rules()) {
    merged[normalize_class_name(leaf)] = target;
  }
  for (const std::string& leaf : t.original_leaves) {
    std::string key = normalize_class_name(leaf);
    auto it = merged.find(key);
    t.mapping[key] = it != merged.end() ? it->second : leaf;
  }
  validate_taxonomy(t);
  return t;
}

void collect_leaves(const TaxonomyNode& node, std::vector<std::string>& out) {
  if (node.is_leaf()) {
    out.push_back(node.name);
    return;
  }
  for (const TaxonomyNode& c : node.children) collect_leaves(c, out);
}

}  // namespace

const Taxonomy& default_taxonomy() {
  static const Taxonomy t = build_default();
  return t;
}

void validate_taxonomy(const Taxonomy& t) {
  auto unique_normalized = [](const std::vector<std::string>& names,
                              const char* what) {
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (!seen.insert(normalize_class_name(n)).second) {
        throw Error(ErrorCode::schema, "taxonomy",
                    std::string("duplicate ") + what + ": " + n);
      }
    }
  };
  unique_normalized(t.original_leaves, "original leaf");
  unique_normalized(t.model_classes, "model class");
  if (t.model_classes.size() < 2) {
    throw Error(ErrorCode::schema, "taxonomy", "need at least two model classes");
  }

  std::set<std::string> model_keys;
  for (const auto& m : t.model_classes) model_keys.insert(normalize_class_name(m));

  for (const auto& leaf : t.original_leaves) {
    auto it = t.mapping.find(normalize_class_name(leaf));
    if (it == t.mapping.end()) {
      throw Error(ErrorCode::schema, "taxonomy", "unmapped original leaf: " + leaf);
    }
    if (!model_keys.count(normalize_class_name(it->second))) {
      throw Error(ErrorCode::schema, "taxonomy",
                  "mapping target is not a model class: " + it->second);
    }
  }

  std::vector<std::string> tree_leaves;
  collect_leaves(t.root, tree_leaves);
  std::set<std::string> tree_set, leaf_set;
  for (const auto& n : tree_leaves) tree_set.insert(normalize_class_name(n));
  for (const auto& n : t.original_leaves) leaf_set.insert(normalize_class_name(n));
  if (tree_set != leaf_set) {
    throw Error(ErrorCode::schema, "taxonomy",
                "tree leaves and original_leaves disagree");
  }
}

namespace {

nlohmann::ordered_json node_to_json(const TaxonomyNode& n) {
  nlohmann::ordered_json j;
  j["name"] = n.name;
  if (!n.is_leaf()) {
    j["children"] = nlohmann::ordered_json::array();
    for (const auto& c : n.children) j["children"].push_back(node_to_json(c));
  }
  return j;
}

TaxonomyNode node_from_json(const nlohmann::json& j) {
  TaxonomyNode n;
  if (!j.contains("name") || !j["name"].is_string()) {
    throw Error(ErrorCode::schema, "taxonomy", "node without a string name");
  }
  n.name = j["name"].get<std::string>();
  if (j.contains("children")) {
    for (const auto& c : j["children"]) n.children.push_back(node_from_json(c));
  }
  return n;
}

}  // namespace

Taxonomy load_taxonomy(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::schema, "taxonomy", std::string("bad json: ") + e.what());
  }
  Taxonomy t;
  try {
    t.root = node_from_json(j.at("nodes"));
    t.original_leaves = j.at("original_leaves").get<std::vector<std::string>>();
    t.model_classes = j.at("model_classes").get<std::vector<std::string>>();
    for (const auto& [k, v] : j.at("mapping").items()) {
      t.mapping[normalize_class_name(k)] = v.get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, "taxonomy", std::string("bad taxonomy: ") + e.what());
  }
  validate_taxonomy(t);
  return t;
}

void save_taxonomy(const Taxonomy& t, const std::string& path) {
  nlohmann::ordered_json j;
  j["nodes"] = node_to_json(t.root);
  j["original_leaves"] = t.original_leaves;
  j["model_classes"] = t.model_classes;
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& leaf : t.original_leaves) {
    m[leaf] = t.mapping.at(normalize_class_name(leaf));
  }
  j["mapping"] = m;
  write_file_atomic(path, j.dump(2) + "\n");
}

int32_t find_model_class(const Taxonomy& t, std::string_view name) {
  std::string key = normalize_class_name(name);
  for (size_t i = 0; i < t.model_classes.size(); ++i) {
    if (normalize_class_name(t.model_classes[i]) == key) {
      return static_cast<int32_t>(i);
    }
  }
  return -1;
}

int32_t model_class_index(const Taxonomy& t, std::string_view name) {
  int32_t i = find_model_class(t, name);
  if (i < 0) {
    throw Error(ErrorCode::schema, "taxonomy",
                "unknown model class: " + std::string(name));
  }
  return i;
}

std::string map_class(const Taxonomy& t, std::string_view original) {
  auto it = t.mapping.find(normalize_class_name(original));
  if (it != t.mapping.end()) return it->second;
  int32_t i = find_model_class(t, original);
  if (i >= 0) return t.model_classes[static_cast<size_t>(i)];
  throw Error(ErrorCode::schema, "taxonomy",
              "unknown class label: " + std::string(original));
}

}  // namespace marrowbench
