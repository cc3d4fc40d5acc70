// modcap: generate data, train, ablate, evaluate, caption, export attention.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "modcap/modcap.hpp"

namespace fs = std::filesystem;
using namespace modcap;

namespace {

// exit codes
constexpr int kUsage = 2, kInput = 3, kDiverged = 4, kFailure = 1;

struct CliError : std::runtime_error {
  CliError(std::string kind, const std::string& msg, int code)
      : std::runtime_error(msg), kind(std::move(kind)), code(code) {}
  std::string kind;
  int code;
};

int fail(const std::string& kind, const std::string& msg, int code) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", msg}}.dump() << '\n';
  return code;
}

void need_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw CliError("input", what + " '" + path + "' does not exist", kInput);
}

fs::path ready_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw CliError("output", "cannot create output directory '" + dir + "'", kInput);
  return fs::path(dir);
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw CliError("output", "cannot write '" + p.string() + "'", kInput);
  os << s;
}

struct Common {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string scale = "desk";
  bool no_mod = false, no_mil = false, no_amil = false;

  Ablation ablation() const { return {no_mod, no_mil, no_amil}; }
};

void add_common(CLI::App* c, Common& o, bool ablation_flags) {
  c->add_option("--seed", o.seed, "random seed")->capture_default_str();
  c->add_option("--out-dir", o.out_dir, "directory for all outputs")->capture_default_str();
  c->add_option("--scale", o.scale, "preset: desk or paper")->check(CLI::IsMember({"desk", "paper"}))->capture_default_str();
  if (ablation_flags) {
    c->add_flag("--no-mod", o.no_mod, "replace the composed word with the initial estimate");
    c->add_flag("--no-mil", o.no_mil, "zero the object word, drop MIL losses");
    c->add_flag("--no-amil", o.no_amil, "drop the attention-MIL branch");
  }
}

std::string default_lexicon_path(const std::string& data) {
  const auto p = fs::path(data).parent_path() / "lexicon.json";
  return fs::is_regular_file(p) ? p.string() : std::string{};
}

SubcategoryLexicon lexicon_from(const std::string& path) {
  if (path.empty()) return default_lexicon();
  need_file(path, "lexicon");
  return load_lexicon(path);
}

// ---- gen-data --------------------------------------------------------------

struct GenData {
  Common c;
  std::size_t train = 1000, val = 100, test = 500;
  double sigma = 0.1;
  std::size_t references = 3;
};

void gen_data(const GenData& o) {
  constexpr std::uint64_t kStride = 1000000, kVal = 300000, kTest = 600000;
  if (o.train > kVal || o.val > kTest - kVal || o.test > kStride - kTest)
    throw CliError("config", "split sizes exceed the per-split seed range", kUsage);
  auto cfg = scene_preset(parse_scale(o.c.scale));
  cfg.noise_sigma = o.sigma;
  cfg.num_references = o.references;
  validate(cfg);
  const auto dir = ready_out_dir(o.c.out_dir);
  const std::uint64_t base = o.c.seed * kStride;
  save_dataset((dir / "train.jsonl").string(), generate_scenes(base + 1, o.train, cfg, "train"));
  save_dataset((dir / "val.jsonl").string(), generate_scenes(base + kVal, o.val, cfg, "val"));
  save_dataset((dir / "test.jsonl").string(), generate_scenes(base + kTest, o.test, cfg, "test"));
  save_lexicon((dir / "lexicon.json").string(), cfg.lexicon);
  std::cout << "wrote " << o.train << "/" << o.val << "/" << o.test << " scenes to " << dir.string() << '\n';
}

// ---- train -----------------------------------------------------------------

struct TrainOpts {
  Common c;
  std::string data, lexicon, resume;
  std::size_t epochs = 0, batch = 0, mil_epochs = 0, anneal = 0, max_iter = 0, threads = 1, min_count = 1;
  double lr = 0, lr_final = 0;
  int precision = 64;
};

TrainConfig train_config(const TrainOpts& o) {
  auto tc = train_preset(parse_scale(o.c.scale));
  tc.seed = o.c.seed;
  if (o.epochs) tc.epochs = o.epochs;
  if (o.batch) tc.batch_size = o.batch;
  if (o.mil_epochs) tc.mil_joint_epochs = o.mil_epochs;
  if (o.anneal) tc.anneal_start_epoch = o.anneal;
  if (o.lr > 0) tc.learning_rate_initial = o.lr;
  if (o.lr_final > 0) tc.learning_rate_final = o.lr_final;
  tc.max_iterations = o.max_iter;
  tc.threads = o.threads;
  tc.validate();
  return tc;
}

template <typename T>
void train_with(const TrainOpts& o, const TrainConfig& tc, const std::vector<Scene>& scenes,
                const SubcategoryLexicon& lex, const fs::path& dir) {
  const auto model = (dir / "model.bin").string(), optim = (dir / "optimizer.bin").string();
  Captioner<T> cap = o.resume.empty() ? [&] {
    auto base = model_preset(parse_scale(o.c.scale), lex);
    base.ablation = o.c.ablation();
    return make_captioner<T>(scenes, lex, base, o.min_count, o.c.seed);
  }()
                                      : load_captioner<T>(o.resume);
  Trainer<T> tr(cap, scenes, tc);
  const bool resuming = !o.resume.empty();
  if (resuming) {
    const auto opt = (fs::path(o.resume).parent_path() / "optimizer.bin").string();
    need_file(opt, "optimizer state");
    tr.restore_optimizer_state(load_checkpoint(opt));
  }
  const auto log_path = dir / "train_log.csv";
  const bool append = resuming && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw CliError("output", "cannot write '" + log_path.string() + "'", kInput);
  if (!append) log << csv_header() << '\n';
  const nlohmann::json extra{{"train", tc.to_json()}, {"precision", o.precision}};
  tr.run([&](const IterationRecord& r) { log << csv_row(r) << '\n'; },
         [&](const EpochRecord& e) {
           log.flush();
           save_captioner(model, cap, extra);
           save_checkpoint(optim, tr.optimizer_state());
           std::cout << "epoch " << e.epoch << " loss " << e.total << " lr " << e.learning_rate << '\n';
         });
  // max_iterations may stop mid-epoch
  save_captioner(model, cap, extra);
  save_checkpoint(optim, tr.optimizer_state());
}

void train(const TrainOpts& o) {
  need_file(o.data, "dataset");
  if (!o.resume.empty()) need_file(o.resume, "checkpoint");
  if (o.precision != 32 && o.precision != 64) throw CliError("config", "--precision must be 32 or 64", kUsage);
  const auto lex = lexicon_from(o.lexicon.empty() ? default_lexicon_path(o.data) : o.lexicon);
  const auto tc = train_config(o);
  const auto dir = ready_out_dir(o.c.out_dir);
  const auto scenes = load_dataset(o.data);
  if (o.precision == 32) train_with<float>(o, tc, scenes, lex, dir);
  else train_with<double>(o, tc, scenes, lex, dir);
}

// ---- ablate ----------------------------------------------------------------

struct AblateOpts {
  TrainOpts t;
  std::string eval_data;
  std::vector<std::string> variants = default_variants();
  std::size_t max_len = 16;
};

void ablate(AblateOpts o) {
  // ablation flags pick a single comparison against the complete model
  const auto flagged = o.t.c.ablation();
  if (flagged.no_mod || flagged.no_mil || flagged.no_amil) o.variants = {"complete", flagged.label()};
  need_file(o.t.data, "dataset");
  need_file(o.eval_data, "evaluation dataset");
  for (const auto& v : o.variants) parse_ablation(v);
  const auto lex = lexicon_from(o.t.lexicon.empty() ? default_lexicon_path(o.t.data) : o.t.lexicon);
  const auto tc = train_config(o.t);
  const auto dir = ready_out_dir(o.t.c.out_dir);
  const auto train_set = load_dataset(o.t.data), eval_set = load_dataset(o.eval_data);
  std::vector<std::pair<std::string, MetricReport>> rows;
  std::ostringstream csv;
  csv << ablation_csv_header() << '\n';
  for (const auto& v : o.variants) {
    auto sub = dir / v;
    fs::create_directories(sub);
    auto r = run_variant(v, train_set, eval_set, lex, model_preset(parse_scale(o.t.c.scale), lex), tc, o.t.min_count,
                         o.max_len);
    save_captioner((sub / "model.bin").string(), r.cap, {{"train", tc.to_json()}});
    write_text(sub / "metrics.json", r.report.to_json().dump(2) + "\n");
    csv << ablation_csv_row(v, r.report) << '\n';
    rows.emplace_back(v, r.report);
    std::cout << "trained " << v << '\n';
  }
  write_text(dir / "ablation.csv", csv.str());
  const auto table = ablation_table(rows);
  write_text(dir / "ablation.txt", table);
  std::cout << table;
}

// ---- evaluate / caption / export-attention ---------------------------------

struct EvalOpts {
  Common c;
  std::string model, data, id;
  std::size_t max_len = 16;
};

void check_eval_inputs(const EvalOpts& o) {
  need_file(o.model, "checkpoint");
  need_file(meta_path(o.model), "checkpoint metadata");
  need_file(o.data, "dataset");
}

void evaluate(const EvalOpts& o) {
  check_eval_inputs(o);
  const auto dir = ready_out_dir(o.c.out_dir);
  const auto cap = load_captioner<double>(o.model);
  const auto scenes = load_dataset(o.data);
  const auto decoded = decode_all(cap, scenes, o.max_len);
  const auto rep = score(decoded, scenes, cap.lexicon);
  write_text(dir / "metrics.json", rep.to_json().dump(2) + "\n");
  std::ostringstream csv;
  csv << std::setprecision(17);
  const auto cols = MetricReport::csv_columns();
  const auto vals = rep.csv_values();
  for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
  csv << '\n';
  for (std::size_t i = 0; i < vals.size(); ++i) csv << (i ? "," : "") << vals[i];
  csv << '\n';
  write_text(dir / "metrics.csv", csv.str());
  std::ostringstream caps;
  for (std::size_t i = 0; i < scenes.size(); ++i)
    caps << nlohmann::json{{"id", scenes[i].id}, {"caption", join_tokens(decoded[i].tokens)}}.dump() << '\n';
  write_text(dir / "captions.jsonl", caps.str());
  std::cout << rep.to_json().dump() << '\n';
}

const Scene& pick_scene(const std::vector<Scene>& scenes, const std::string& id) {
  if (scenes.empty()) throw CliError("input", "dataset is empty", kInput);
  if (id.empty()) return scenes.front();
  for (const auto& s : scenes)
    if (s.id == id) return s;
  throw CliError("input", "no scene with id '" + id + "'", kInput);
}

void caption(const EvalOpts& o) {
  check_eval_inputs(o);
  const auto dir = ready_out_dir(o.c.out_dir);
  const auto cap = load_captioner<double>(o.model);
  const auto scenes = load_dataset(o.data);
  const auto text = join_tokens(greedy_decode(cap, pick_scene(scenes, o.id), o.max_len).tokens);
  write_text(dir / "caption.txt", text + "\n");
  std::cout << text << '\n';
}

void export_attention(const EvalOpts& o) {
  check_eval_inputs(o);
  const auto dir = ready_out_dir(o.c.out_dir);
  const auto cap = load_captioner<double>(o.model);
  const auto scenes = load_dataset(o.data);
  const auto& s = pick_scene(scenes, o.id);
  const auto d = greedy_decode(cap, s, o.max_len);
  const auto path = dir / ("attention_" + s.id + ".csv");
  export_attention_trace(d, path.string());
  std::cout << join_tokens(d.tokens) << '\n' << path.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modcap: compositional module captioner on synthetic scenes"};
  app.require_subcommand(1);

  GenData g;
  auto* gen = app.add_subcommand("gen-data", "write train/val/test scene splits and the lexicon");
  add_common(gen, g.c, false);
  gen->add_option("--train", g.train, "training scenes")->capture_default_str();
  gen->add_option("--val", g.val, "validation scenes")->capture_default_str();
  gen->add_option("--test", g.test, "test scenes")->capture_default_str();
  gen->add_option("--sigma", g.sigma, "feature noise")->check(CLI::NonNegativeNumber)->capture_default_str();
  gen->add_option("--references", g.references, "captions per scene")->capture_default_str();

  auto train_flags = [](CLI::App* c, TrainOpts& t) {
    add_common(c, t.c, true);
    c->add_option("--data", t.data, "training split (JSONL)")->required();
    c->add_option("--lexicon", t.lexicon, "lexicon JSON (default: next to --data, else built in)");
    c->add_option("--epochs", t.epochs, "epochs (default: preset)");
    c->add_option("--batch-size", t.batch, "batch size (default: preset)");
    c->add_option("--lr", t.lr, "initial learning rate (default: preset)");
    c->add_option("--lr-final", t.lr_final, "final learning rate (default: preset)");
    c->add_option("--anneal-start", t.anneal, "last epoch at the initial rate (default: preset)");
    c->add_option("--mil-epochs", t.mil_epochs, "joint MIL epochs before the detector is frozen (default: preset)");
    c->add_option("--max-iterations", t.max_iter, "stop after this many updates (0: none)");
    c->add_option("--threads", t.threads, "worker threads per batch")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--min-count", t.min_count, "vocabulary frequency threshold")->capture_default_str();
  };

  TrainOpts t;
  auto* tr = app.add_subcommand("train", "train a captioner; writes model.bin, optimizer.bin, train_log.csv");
  train_flags(tr, t);
  tr->add_option("--resume", t.resume, "continue from this model.bin (optimizer.bin alongside)");
  tr->add_option("--precision", t.precision, "32 or 64")->capture_default_str();

  AblateOpts a;
  auto* ab = app.add_subcommand("ablate", "train each variant on the same data and compare");
  train_flags(ab, a.t);
  ab->add_option("--eval-data", a.eval_data, "held-out split (JSONL)")->required();
  ab->add_option("--variants", a.variants, "variants, e.g. complete no_mod no_mod+no_amil")->capture_default_str();
  ab->add_option("--max-len", a.max_len, "decode length limit")->capture_default_str();

  auto eval_flags = [](CLI::App* c, EvalOpts& e, bool with_id) {
    add_common(c, e.c, false);
    c->add_option("--model", e.model, "model.bin")->required();
    c->add_option("--data", e.data, "scenes (JSONL)")->required();
    c->add_option("--max-len", e.max_len, "decode length limit")->capture_default_str();
    if (with_id) c->add_option("--id", e.id, "scene id (default: first scene)");
  };
  EvalOpts ev, cp, ex;
  auto* evc = app.add_subcommand("evaluate", "decode a split; writes metrics.json, metrics.csv, captions.jsonl");
  eval_flags(evc, ev, false);
  auto* cpc = app.add_subcommand("caption", "caption one scene; prints it and writes caption.txt");
  eval_flags(cpc, cp, true);
  auto* exc = app.add_subcommand("export-attention", "write the module attention trace of one scene");
  eval_flags(exc, ex, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what(), kUsage);
  }

  try {
    if (*gen) gen_data(g);
    else if (*tr) train(t);
    else if (*ab) ablate(a);
    else if (*evc) evaluate(ev);
    else if (*cpc) caption(cp);
    else if (*exc) export_attention(ex);
  } catch (const CliError& e) {
    return fail(e.kind, e.what(), e.code);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), kUsage);
  } catch (const ParseError& e) {
    return fail("parse", e.what(), kInput);
  } catch (const CheckpointError& e) {
    return fail("checkpoint", e.what(), kInput);
  } catch (const TrainingDiverged& e) {
    return fail("diverged", e.what(), kDiverged);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kFailure);
  }
  return 0;
}
