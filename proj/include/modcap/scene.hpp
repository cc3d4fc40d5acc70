#pragma once

// Synthetic scenes: region features with known object/attribute content and
// templated reference captions that describe exactly the annotated tuples.

#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "modcap/lexicon.hpp"

namespace modcap {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// One annotated fact: (subcategory, base object noun, attribute token).
struct AttributeTuple {
  std::string category;
  std::string object;
  std::string attribute;

  auto operator<=>(const AttributeTuple&) const = default;
};

/// An object instance group in a scene. Exactly one of color/size is set.
struct SceneObject {
  std::string noun;
  int count = 1;
  std::optional<std::string> color;
  std::optional<std::string> size;

  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  std::string id;
  Tensor<double> features;  // [regions x feature_dim]
  std::vector<SceneObject> objects;
  std::optional<std::string> semantic;  // action of objects[0]
  std::optional<std::string> spatial;   // relation objects[0] -> objects[1]
  std::vector<std::string> gt_objects;  // sorted base nouns
  std::vector<AttributeTuple> gt_tuples;
  std::vector<TokenSeq> references;

  std::size_t num_regions() const { return features.shape()[0]; }
  std::size_t feature_dim() const { return features.shape()[1]; }
  bool operator==(const Scene&) const = default;
};

struct SceneConfig {
  std::size_t feature_dim = 64;
  std::size_t num_regions = 6;
  std::size_t max_objects = 3;
  int max_count = 4;
  double noise_sigma = 0.1;
  double feature_scale = 1.0;
  double size_probability = 0.3;      // object described by size instead of color
  double semantic_probability = 0.5;  // objects[0] carries an action
  std::size_t num_references = 3;
  SubcategoryLexicon lexicon = default_lexicon();

  /// Paper-scale feature geometry (not a test target).
  static SceneConfig paper() {
    SceneConfig c;
    c.feature_dim = 2048;
    c.num_regions = 36;
    return c;
  }
};

/// Offsets of the one-hot blocks inside a region feature.
struct FeatureLayout {
  std::size_t object = 0, color = 0, size = 0, semantic = 0, spatial = 0, end = 0;

  explicit FeatureLayout(const SubcategoryLexicon& lex) {
    object = 0;
    color = object + lex.num_objects();
    size = color + lex.labels(Category::kColor).size();
    semantic = size + lex.labels(Category::kSize).size();
    spatial = semantic + lex.labels(Category::kSemantic).size();
    end = spatial + lex.labels(Category::kSpatial).size();
  }
};

inline void validate(const SceneConfig& cfg) {
  cfg.lexicon.validate();
  const FeatureLayout layout(cfg.lexicon);
  if (cfg.feature_dim < layout.end)
    throw ConfigError("feature_dim " + std::to_string(cfg.feature_dim) + " cannot hold the " +
                      std::to_string(layout.end) + " prototype dimensions");
  if (cfg.num_regions < 1) throw ConfigError("num_regions must be >= 1");
  if (cfg.max_objects < 1 || cfg.max_objects > cfg.lexicon.num_objects())
    throw ConfigError("max_objects must be in [1, number of object words]");
  if (cfg.max_count < 1 || cfg.max_count > int(cfg.lexicon.labels(Category::kCount).size()))
    throw ConfigError("max_count must be in [1, number of count words]");
  if (cfg.noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
  if (cfg.num_references < 1 || cfg.num_references > 5) throw ConfigError("num_references must be in [1, 5]");
}

/// Count word, labels in ascending order starting at one ("a").
inline std::string count_word(const SubcategoryLexicon& lex, int count) {
  return lex.labels(Category::kCount).at(std::size_t(count - 1));
}

/// Templates: 0 canonical (everything annotated), 1 without the third object
/// and action, 2 without color/size words. Ids wrap modulo 3.
inline constexpr std::size_t kNumTemplates = 3;

inline TokenSeq render_caption(const Scene& scene, std::size_t template_id, const SubcategoryLexicon& lex) {
  const std::size_t tmpl = template_id % kNumTemplates;
  TokenSeq out;
  auto phrase = [&](const SceneObject& o) {
    out.push_back(count_word(lex, o.count));
    if (tmpl != 2) {
      if (o.color) out.push_back(*o.color);
      if (o.size) out.push_back(*o.size);
    }
    out.push_back(o.count == 1 ? o.noun : plural_of(o.noun));
  };
  if (scene.objects.empty()) return out;
  phrase(scene.objects[0]);
  if (scene.semantic && tmpl != 1) out.push_back(*scene.semantic);
  if (scene.objects.size() >= 2 && scene.spatial) {
    out.push_back(*scene.spatial);
    phrase(scene.objects[1]);
  }
  if (scene.objects.size() >= 3 && tmpl != 1) {
    out.push_back("and");
    phrase(scene.objects[2]);
  }
  return out;
}

/// Annotation tuples implied by the scene layout (canonical order).
inline std::vector<AttributeTuple> scene_tuples(const Scene& s, const SubcategoryLexicon& lex) {
  std::vector<AttributeTuple> t;
  for (const auto& o : s.objects) {
    t.push_back({"count", o.noun, count_word(lex, o.count)});
    if (o.color) t.push_back({"color", o.noun, *o.color});
    if (o.size) t.push_back({"size", o.noun, *o.size});
  }
  if (s.semantic) t.push_back({"semantic", s.objects[0].noun, *s.semantic});
  if (s.spatial) t.push_back({"spatial", s.objects[0].noun, *s.spatial});
  std::sort(t.begin(), t.end());
  return t;
}

/// Pure function of (seed, config).
inline Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg, std::string id = {}) {
  validate(cfg);
  const auto& lex = cfg.lexicon;
  const FeatureLayout layout(lex);
  std::mt19937_64 rng(seed);
  auto uniform_int = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  auto bernoulli = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };

  Scene s;
  s.id = id.empty() ? "scene-" + std::to_string(seed) : std::move(id);

  const std::size_t max_obj = std::min(cfg.max_objects, cfg.num_regions);
  const std::size_t n_obj = uniform_int(1, max_obj);
  std::vector<std::size_t> pool(lex.num_objects());
  std::iota(pool.begin(), pool.end(), 0);
  std::shuffle(pool.begin(), pool.end(), rng);

  std::vector<int> counts(n_obj);
  for (;;) {
    std::size_t total = 0;
    for (auto& c : counts) {
      c = int(uniform_int(1, std::size_t(cfg.max_count)));
      total += std::size_t(c);
    }
    if (total <= cfg.num_regions) break;
  }

  const auto& colors = lex.labels(Category::kColor);
  const auto& sizes = lex.labels(Category::kSize);
  for (std::size_t k = 0; k < n_obj; ++k) {
    SceneObject o;
    o.noun = lex.objects()[pool[k]];
    o.count = counts[k];
    if (bernoulli(cfg.size_probability)) o.size = sizes[uniform_int(0, sizes.size() - 1)];
    else o.color = colors[uniform_int(0, colors.size() - 1)];
    s.objects.push_back(std::move(o));
  }
  if (bernoulli(cfg.semantic_probability)) {
    const auto& sem = lex.labels(Category::kSemantic);
    s.semantic = sem[uniform_int(0, sem.size() - 1)];
  }
  if (n_obj >= 2) {
    const auto& sp = lex.labels(Category::kSpatial);
    s.spatial = sp[uniform_int(0, sp.size() - 1)];
  }

  // Region owners: object k fills counts[k] regions, the rest is background.
  std::vector<int> owner;
  for (std::size_t k = 0; k < n_obj; ++k) owner.insert(owner.end(), std::size_t(counts[k]), int(k));
  owner.resize(cfg.num_regions, -1);
  std::shuffle(owner.begin(), owner.end(), rng);

  s.features = Tensor<double>(Shape{cfg.num_regions, cfg.feature_dim});
  const double a = cfg.feature_scale;
  for (std::size_t r = 0; r < cfg.num_regions; ++r) {
    if (owner[r] < 0) continue;
    const auto& o = s.objects[std::size_t(owner[r])];
    s.features(r, layout.object + *lex.object_index(o.noun)) = a;
    if (o.color) s.features(r, layout.color + *lex.label_index(module_slot(Category::kColor), *o.color)) = a;
    if (o.size) s.features(r, layout.size + *lex.label_index(module_slot(Category::kSize), *o.size)) = a;
    if (owner[r] == 0) {
      if (s.semantic)
        s.features(r, layout.semantic + *lex.label_index(module_slot(Category::kSemantic), *s.semantic)) = a;
      if (s.spatial)
        s.features(r, layout.spatial + *lex.label_index(module_slot(Category::kSpatial), *s.spatial)) = a;
    }
  }
  if (cfg.noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (std::size_t i = 0; i < s.features.size(); ++i) s.features[i] += noise(rng);
  }

  for (const auto& o : s.objects) s.gt_objects.push_back(o.noun);
  std::sort(s.gt_objects.begin(), s.gt_objects.end());
  s.gt_tuples = scene_tuples(s, lex);
  for (std::size_t k = 0; k < cfg.num_references; ++k) s.references.push_back(render_caption(s, k, lex));
  return s;
}

/// Scenes [first_seed, first_seed + n).
inline std::vector<Scene> generate_scenes(std::uint64_t first_seed, std::size_t n, const SceneConfig& cfg,
                                          const std::string& prefix = "scene") {
  std::vector<Scene> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(generate_scene(first_seed + i, cfg, prefix + "-" + std::to_string(first_seed + i)));
  return out;
}

}  // namespace modcap
