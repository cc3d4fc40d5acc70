#pragma once

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "modcap/bundle.hpp"

namespace modcap {

/// Per-timestep record of a decoded word.
struct TraceRow {
  std::string token;
  std::array<double, kNumModules + 1> alpha_hat{};  // modules in slot order, then init estimate
  double beta = 0.0;
  std::size_t region_argmax = 0;
  std::vector<double> region_attention;
  std::vector<double> word_probs;
  std::vector<double> init_probs;
  std::vector<std::vector<double>> module_probs;  // empty under no_mod
};

struct DecodedCaption {
  TokenSeq tokens;                // without <bos>/<eos>
  std::vector<std::size_t> ids;
  std::vector<TraceRow> trace;    // aligned with tokens
  bool hit_eos = false;
};

template <typename T>
std::vector<double> to_doubles(const Tensor<T>& t) {
  return std::vector<double>(t.data(), t.data() + t.size());
}

/// Index of the largest entry; ties go to the lowest index.
template <typename T>
std::size_t argmax(const Tensor<T>& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

template <typename T>
DecodedCaption greedy_decode(const Captioner<T>& cap, const Scene& scene, std::size_t max_len = 16) {
  const auto& model = cap.model;
  Tape<T> tape;
  auto b = model.bind(tape, std::vector<bool>(model.params().size(), true));
  auto ctx = model.scene_context(tape, b, scene.features);
  auto st = model.initial_state(tape);
  DecodedCaption out;
  std::size_t prev = kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    auto step = model.forward_step(tape, b, ctx, prev, st);
    const auto& p = step.word_probs.value();
    // <bos> and <pad> are never emitted.
    Tensor<T> masked = p;
    masked[kBos] = T(-1);
    masked[kPad] = T(-1);
    const std::size_t next = argmax(masked);
    if (next == kEos) {
      out.hit_eos = true;
      break;
    }
    TraceRow row;
    row.token = cap.vocab.token(next);
    const auto& ah = step.alpha_hat.value();
    for (std::size_t i = 0; i <= kNumModules; ++i) row.alpha_hat[i] = double(ah[i]);
    row.beta = double(step.beta.item());
    row.region_attention = to_doubles(step.region_attention.value());
    row.region_argmax = argmax(step.region_attention.value());
    row.word_probs = to_doubles(p);
    row.init_probs = to_doubles(step.init_probs.value());
    for (const auto& mp : step.module_probs) row.module_probs.push_back(to_doubles(mp.value()));
    out.tokens.push_back(row.token);
    out.ids.push_back(next);
    out.trace.push_back(std::move(row));
    prev = next;
  }
  return out;
}

inline std::string join_tokens(const TokenSeq& toks) {
  std::string s;
  for (const auto& t : toks) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

// ---- attention trace CSV ---------------------------------------------------

inline std::string trace_header() {
  std::string h = "t,token";
  for (const auto& n : kModuleNames) h += "," + n;
  return h + ",init_estimate,beta,region_argmax";
}

inline void write_attention_trace(std::ostream& os, const DecodedCaption& d) {
  os << trace_header() << '\n' << std::setprecision(17);
  for (std::size_t t = 0; t < d.trace.size(); ++t) {
    const auto& r = d.trace[t];
    os << t << ',' << r.token;
    for (double a : r.alpha_hat) os << ',' << a;
    os << ',' << r.beta << ',' << r.region_argmax << '\n';
  }
}

inline void export_attention_trace(const DecodedCaption& d, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_attention_trace(os, d);
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

/// Rows of a trace CSV (token, alpha_hat, beta, region_argmax).
inline std::vector<TraceRow> read_attention_trace(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != trace_header()) throw std::runtime_error("attention trace: bad header");
  std::vector<TraceRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 2 + kNumModules + 1 + 2) throw std::runtime_error("attention trace: bad row '" + line + "'");
    TraceRow r;
    r.token = cells[1];
    for (std::size_t i = 0; i <= kNumModules; ++i) r.alpha_hat[i] = std::stod(cells[2 + i]);
    r.beta = std::stod(cells[3 + kNumModules]);
    r.region_argmax = std::stoul(cells[4 + kNumModules]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace modcap
