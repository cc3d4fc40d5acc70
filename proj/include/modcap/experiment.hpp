#pragma once

// Train / decode / score helpers shared by the command-line tool and the
// acceptance runner.

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "modcap/decode.hpp"
#include "modcap/metrics.hpp"
#include "modcap/trainer.hpp"

namespace modcap {

enum class Scale { kDesk, kPaper };

inline Scale parse_scale(const std::string& s) {
  if (s == "desk") return Scale::kDesk;
  if (s == "paper") return Scale::kPaper;
  throw ConfigError("unknown scale '" + s + "' (expected desk or paper)");
}

inline SceneConfig scene_preset(Scale s) { return s == Scale::kPaper ? SceneConfig::paper() : SceneConfig{}; }
inline TrainConfig train_preset(Scale s) { return s == Scale::kPaper ? TrainConfig::paper() : TrainConfig::desk(); }

/// Model dims for a preset; vocabulary-dependent fields are filled by make_captioner.
inline ModelConfig model_preset(Scale s, const SubcategoryLexicon& lex) {
  return s == Scale::kPaper ? ModelConfig::paper(0, lex) : ModelConfig::desk(0, lex);
}

inline Ablation parse_ablation(const std::string& label) {
  Ablation a;
  if (label == "complete") return a;
  std::istringstream is(label);
  for (std::string part; std::getline(is, part, '+');) {
    if (part == "no_mod") a.no_mod = true;
    else if (part == "no_mil") a.no_mil = true;
    else if (part == "no_amil") a.no_amil = true;
    else throw ConfigError("unknown ablation '" + part + "'");
  }
  return a;
}

inline const std::vector<std::string>& default_variants() {
  static const std::vector<std::string> v = {"complete", "no_mod", "no_mil", "no_amil", "no_mod+no_amil"};
  return v;
}

template <typename T>
std::vector<DecodedCaption> decode_all(const Captioner<T>& cap, const std::vector<Scene>& scenes,
                                       std::size_t max_len = 16) {
  std::vector<DecodedCaption> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(greedy_decode(cap, s, max_len));
  return out;
}

inline MetricReport score(const std::vector<DecodedCaption>& decoded, const std::vector<Scene>& scenes,
                          const SubcategoryLexicon& lex) {
  std::vector<TokenSeq> toks;
  for (const auto& d : decoded) toks.push_back(d.tokens);
  return evaluate_captions(toks, scenes, lex);
}

struct VariantRun {
  std::string label;
  Captioner<double> cap;
  std::vector<EpochRecord> epochs;
  MetricReport report;
};

/// Fresh captioner for `label`, trained on `train`, scored on `eval`.
inline VariantRun run_variant(const std::string& label, const std::vector<Scene>& train,
                              const std::vector<Scene>& eval, const SubcategoryLexicon& lex, ModelConfig base,
                              const TrainConfig& tc, std::size_t min_count = 1, std::size_t max_len = 16) {
  base.ablation = parse_ablation(label);
  VariantRun r{label, make_captioner<double>(train, lex, base, min_count, tc.seed), {}, {}};
  r.epochs = Trainer<double>(r.cap, train, tc).run();
  r.report = score(decode_all(r.cap, eval, max_len), eval, lex);
  return r;
}

inline std::string ablation_csv_header() {
  std::string h = "variant";
  for (const auto& c : MetricReport::csv_columns()) h += "," + c;
  return h;
}

inline std::string ablation_csv_row(const std::string& label, const MetricReport& r) {
  std::ostringstream os;
  os << label << std::setprecision(17);
  for (double v : r.csv_values()) os << ',' << v;
  return os.str();
}

/// Fixed-width comparison table, metrics as percentages.
inline std::string ablation_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  const std::vector<std::string> cols = {"bleu1", "bleu4", "rouge_l", "cider", "f_object", "f_attribute",
                                         "f_color", "f_count", "f_size", "f_relation"};
  const auto all = MetricReport::csv_columns();
  std::ostringstream os;
  os << std::left << std::setw(16) << "variant";
  for (const auto& c : cols) os << std::right << std::setw(12) << c;
  os << '\n';
  for (const auto& [label, rep] : rows) {
    const auto v = rep.csv_values();
    os << std::left << std::setw(16) << label << std::fixed << std::setprecision(2);
    for (const auto& c : cols) {
      const auto it = std::find(all.begin(), all.end(), c);
      os << std::right << std::setw(12) << (it == all.end() ? 0.0 : 100.0 * v[std::size_t(it - all.begin())]);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace modcap
