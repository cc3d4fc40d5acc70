#pragma once

// Line-delimited JSON dataset: one scene object per line.
//
//   {"id": "...", "features": [[...], ...], "objects": [{"noun", "count",
//    "color"?, "size"?}, ...], "semantic"?: "...", "spatial"?: "...",
//    "gt_objects": [...], "gt_tuples": [[category, object, attribute], ...],
//    "references": [[token, ...], ...]}
//
// Doubles are written in shortest round-trip form, so reloading is exact.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "modcap/scene.hpp"

namespace modcap {

struct ParseError : std::runtime_error {
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

inline nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json j;
  j["id"] = s.id;
  auto feats = nlohmann::json::array();
  for (std::size_t r = 0; r < s.num_regions(); ++r) {
    auto row = nlohmann::json::array();
    for (std::size_t c = 0; c < s.feature_dim(); ++c) row.push_back(s.features(r, c));
    feats.push_back(std::move(row));
  }
  j["features"] = std::move(feats);
  auto objs = nlohmann::json::array();
  for (const auto& o : s.objects) {
    nlohmann::json jo{{"noun", o.noun}, {"count", o.count}};
    if (o.color) jo["color"] = *o.color;
    if (o.size) jo["size"] = *o.size;
    objs.push_back(std::move(jo));
  }
  j["objects"] = std::move(objs);
  if (s.semantic) j["semantic"] = *s.semantic;
  if (s.spatial) j["spatial"] = *s.spatial;
  j["gt_objects"] = s.gt_objects;
  auto tuples = nlohmann::json::array();
  for (const auto& t : s.gt_tuples) tuples.push_back({t.category, t.object, t.attribute});
  j["gt_tuples"] = std::move(tuples);
  j["references"] = s.references;
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  s.id = j.at("id").get<std::string>();
  const auto& feats = j.at("features");
  if (!feats.is_array() || feats.empty()) throw std::runtime_error("features must be a non-empty array");
  const std::size_t rows = feats.size();
  const std::size_t cols = feats.at(0).size();
  if (cols == 0) throw std::runtime_error("feature rows must be non-empty");
  s.features = Tensor<double>(Shape{rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    if (feats[r].size() != cols) throw std::runtime_error("ragged feature matrix at row " + std::to_string(r));
    for (std::size_t c = 0; c < cols; ++c) s.features(r, c) = feats[r][c].get<double>();
  }
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    o.noun = jo.at("noun").get<std::string>();
    o.count = jo.at("count").get<int>();
    if (jo.contains("color")) o.color = jo["color"].get<std::string>();
    if (jo.contains("size")) o.size = jo["size"].get<std::string>();
    s.objects.push_back(std::move(o));
  }
  if (j.contains("semantic")) s.semantic = j["semantic"].get<std::string>();
  if (j.contains("spatial")) s.spatial = j["spatial"].get<std::string>();
  s.gt_objects = j.at("gt_objects").get<std::vector<std::string>>();
  for (const auto& t : j.at("gt_tuples")) {
    if (!t.is_array() || t.size() != 3) throw std::runtime_error("gt_tuples entries must be 3-element arrays");
    s.gt_tuples.push_back({t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>()});
  }
  s.references = j.at("references").get<std::vector<TokenSeq>>();
  if (s.references.empty()) throw std::runtime_error("scene has no reference captions");
  return s;
}

inline void write_dataset(std::ostream& os, const std::vector<Scene>& scenes) {
  for (const auto& s : scenes) os << scene_to_json(s).dump() << '\n';
}

inline void save_dataset(const std::string& path, const std::vector<Scene>& scenes) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_dataset(os, scenes);
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

inline std::vector<Scene> read_dataset(std::istream& is, const std::string& name = "<stream>") {
  std::vector<Scene> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(scene_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(name, lineno, e.what());
    }
  }
  return out;
}

inline std::vector<Scene> load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open dataset '" + path + "'");
  return read_dataset(is, path);
}

}  // namespace modcap
