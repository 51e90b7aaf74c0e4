// SPDX-License-Identifier: Apache-2.0
#include "protolens/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "protolens/analysis.hpp"
#include "protolens/checkpoint.hpp"
#include "protolens/config.hpp"
#include "protolens/corpus.hpp"
#include "protolens/error.hpp"
#include "protolens/io.hpp"
#include "protolens/metrics.hpp"
#include "protolens/rules.hpp"
#include "protolens/trainer.hpp"

namespace protolens::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "usage_error"; }
};

corpus::Mode parse_mode(const std::string& s) {
  if (s == "orth" || s == "orthographic") return corpus::Mode::Orthographic;
  if (s == "ipa" || s == "phonetic") return corpus::Mode::Phonetic;
  throw UsageError("unknown mode '" + s + "' (expected orth or ipa)");
}

corpus::SplitRatios parse_ratios(const std::string& s) {
  std::vector<double> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad split ratio '" + item + "'");
    }
  }
  if (parts.size() != 3) throw UsageError("--split needs three comma-separated ratios");
  for (double p : parts) {
    if (!(p >= 0.0)) throw UsageError("split ratios must be non-negative");
  }
  if (std::abs(parts[0] + parts[1] + parts[2] - 1.0) > 1e-9) {
    throw UsageError("split ratios must sum to 1");
  }
  return {parts[0], parts[1], parts[2]};
}

struct InputRecord {
  std::string name;
  std::string path;
  std::string digest;
};

/// Reads a file and remembers its digest for the manifest.
std::string read_input(const std::string& name, const fs::path& path,
                       std::vector<InputRecord>& inputs) {
  auto bytes = io::read_file(path);
  inputs.push_back({name, path.string(), io::sha256_hex(bytes)});
  return bytes;
}

Json manifest(const std::string& subcommand, const Json& config, const Json& seeds,
              const std::vector<InputRecord>& inputs,
              const std::vector<std::pair<std::string, std::string>>& outputs) {
  Json j;
  j["format"] = "protolens-manifest";
  j["version"] = 1;
  j["tool"] = "protolens";
  j["tool_version"] = kToolVersion;
  j["subcommand"] = subcommand;
  j["config"] = config;
  j["seeds"] = seeds;
  Json in = Json::array();
  for (const auto& r : inputs) in.push_back({{"name", r.name}, {"path", r.path}, {"sha256", r.digest}});
  j["inputs"] = std::move(in);
  Json out = Json::object();
  for (const auto& [name, bytes] : outputs) out[name] = io::sha256_hex(bytes);
  j["outputs"] = std::move(out);
  return j;
}

fs::path sidecar(const fs::path& file, const std::string& suffix) {
  return fs::path(file.string() + suffix);
}

model::Checkpoint load_ckpt(const std::string& path, std::vector<InputRecord>& inputs) {
  return model::decode_checkpoint(read_input("checkpoint", path, inputs));
}

std::string read_stream(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --------------------------------------------------------------------------
// Subcommands
// --------------------------------------------------------------------------

struct PrepareArgs {
  std::string input, mode, variant, split = "0.80,0.08,0.12", out;
  std::uint64_t seed = 0;
};

void cmd_prepare(const PrepareArgs& a, std::ostream& out) {
  const auto mode = parse_mode(a.mode);
  corpus::DatasetVariant variant =
      mode == corpus::Mode::Orthographic ? corpus::DatasetVariant::Orthographic
                                         : corpus::DatasetVariant::Phonetic;
  if (!a.variant.empty()) {
    const auto v = corpus::parse_variant(a.variant);
    if (!v) throw UsageError("unknown variant '" + a.variant + "'");
    if (corpus::variant_mode(*v) != mode) {
      throw UsageError("variant " + std::string(corpus::variant_name(*v)) + " needs --mode " +
                       (corpus::variant_mode(*v) == corpus::Mode::Phonetic ? "ipa" : "orth"));
    }
    variant = *v;
  }
  const auto ratios = parse_ratios(a.split);

  std::vector<InputRecord> inputs;
  const auto text = read_input("input", a.input, inputs);
  const auto ds = corpus::apply_variant(corpus::parse_dataset(text, mode), variant);
  const auto parts = corpus::split(ds, ratios, a.seed);
  const auto vocab = corpus::build_vocab(parts.train);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::vector<std::pair<std::string, std::string>> files = {
      {"train.tsv", corpus::serialize_dataset(parts.train)},
      {"dev.tsv", corpus::serialize_dataset(parts.dev)},
      {"test.tsv", corpus::serialize_dataset(parts.test)},
      {"vocab.json", vocab.to_json()},
  };
  Json cfg;
  cfg["mode"] = corpus::mode_name(mode);
  cfg["variant"] = corpus::variant_name(variant);
  cfg["split"] = {ratios.train, ratios.dev, ratios.test};
  cfg["sizes"] = {parts.train.size(), parts.dev.size(), parts.test.size()};
  const auto m = manifest("prepare", cfg, {{"split", a.seed}}, inputs, files);
  for (const auto& [name, bytes] : files) io::write_file_atomic(dir / name, bytes);
  io::write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
  out << "prepared " << ds.size() << " cognate sets: train " << parts.train.size() << ", dev "
      << parts.dev.size() << ", test " << parts.test.size() << "\n";
}

struct TrainArgs {
  std::string data, config_file, out, mode;
  std::vector<std::string> sets;
  bool quiet = false;
};

void cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<InputRecord> inputs;
  const fs::path dir(a.data);
  config::KeyValues kv;
  if (!a.config_file.empty()) kv = config::parse_config_text(read_input("config", a.config_file, inputs));
  for (const auto& s : a.sets) {
    auto [k, v] = config::parse_assignment(s);
    kv[k] = v;
  }
  const auto cfg = config::resolve(kv);

  corpus::Mode mode;
  if (!a.mode.empty()) {
    mode = parse_mode(a.mode);
  } else {
    const auto mtext = read_input("manifest", dir / "manifest.json", inputs);
    try {
      mode = parse_mode(nlohmann::json::parse(mtext).at("config").at("mode").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("cannot read the mode from the data manifest: ") + e.what());
    }
  }
  const auto train_set = corpus::parse_dataset(read_input("train", dir / "train.tsv", inputs), mode);
  corpus::Dataset dev_set;
  if (fs::exists(dir / "dev.tsv")) {
    dev_set = corpus::parse_dataset(read_input("dev", dir / "dev.tsv", inputs), mode);
  }

  auto progress = [&](const trainer::EpochLog& e) {
    if (!a.quiet) {
      err << "epoch " << e.epoch << " loss " << e.train_loss;
      if (e.dev_avg_edit) err << " dev_avg_edit " << *e.dev_avg_edit << " dev_exact " << *e.dev_exact_rate;
      err << "\n";
    }
    return true;
  };
  const auto result = trainer::train(train_set, dev_set, cfg.model, cfg.train, progress);

  const fs::path ckpt_path(a.out);
  if (ckpt_path.has_parent_path()) fs::create_directories(ckpt_path.parent_path());
  const auto ckpt_bytes = model::encode_checkpoint(result.checkpoint);
  const auto log = trainer::log_csv(result.log);
  Json jcfg = Json::object();
  for (const auto& [k, v] : config::to_key_values(cfg)) jcfg[k] = v;
  jcfg["mode"] = corpus::mode_name(mode);
  jcfg["best_epoch"] = result.best_epoch;
  const auto m = manifest("train", jcfg, {{"seed", cfg.train.seed}, {"init_seed", cfg.model.seed}},
                          inputs, {{"checkpoint", ckpt_bytes}, {"log", log}});
  io::write_file_atomic(ckpt_path, ckpt_bytes);
  io::write_file_atomic(sidecar(ckpt_path, ".log.csv"), log);
  io::write_file_atomic(sidecar(ckpt_path, ".manifest.json"), m.dump(2) + "\n");
  out << "trained " << result.log.size() << " epochs, best epoch " << result.best_epoch << "\n";
}

struct EvalArgs {
  std::string data, ckpt, report, mode, normalize = "gold", predictions, substitutions, filter;
  std::size_t beam = 1;
  bool echo_gold = false, exclude_singletons = false;
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::vector<InputRecord> inputs;
  if (a.ckpt.empty() && !a.echo_gold) throw UsageError("--ckpt is required unless --echo-gold is set");
  std::optional<model::Checkpoint> ckpt;
  corpus::Mode mode = corpus::Mode::Orthographic;
  if (!a.ckpt.empty()) {
    ckpt = load_ckpt(a.ckpt, inputs);
    mode = ckpt->mode;
  }
  if (!a.mode.empty()) mode = parse_mode(a.mode);
  metrics::NormalizeBy by;
  if (a.normalize == "gold") {
    by = metrics::NormalizeBy::Gold;
  } else if (a.normalize == "pred") {
    by = metrics::NormalizeBy::Prediction;
  } else {
    throw UsageError("--normalize must be gold or pred");
  }
  const auto ds = corpus::parse_dataset(read_input("data", a.data, inputs), mode);
  if (ds.empty()) throw ValidationError("evaluation dataset is empty");

  std::vector<corpus::Word> preds;
  metrics::EditDistanceReport rep;
  if (a.echo_gold) {
    for (const auto& cs : ds) preds.push_back(cs.latin);
  } else {
    auto ev = trainer::evaluate(ds, *ckpt, a.beam, by);
    preds = std::move(ev.predictions);
  }
  std::vector<std::pair<corpus::Word, corpus::Word>> pairs;
  for (std::size_t i = 0; i < ds.size(); ++i) pairs.emplace_back(preds[i], ds[i].latin);
  rep = metrics::report(pairs, by);

  std::vector<std::pair<fs::path, std::string>> files;
  files.emplace_back(a.report, metrics::report_json(rep));
  if (!a.predictions.empty()) {
    std::string tsv = "prediction\tgold\tdistance\n";
    for (const auto& [p, g] : pairs) {
      tsv += p.str() + "\t" + g.str() + "\t" + std::to_string(metrics::edit_distance(p, g)) + "\n";
    }
    files.emplace_back(a.predictions, tsv);
  }
  if (!a.substitutions.empty()) {
    std::optional<std::set<corpus::Symbol>> filter;
    if (!a.filter.empty()) {
      filter.emplace();
      std::stringstream ss(a.filter);
      std::string sym;
      while (std::getline(ss, sym, ',')) {
        if (!sym.empty()) filter->insert(sym);
      }
    }
    files.emplace_back(a.substitutions, metrics::substitution_csv(metrics::substitution_matrix(
                                            pairs, filter, a.exclude_singletons)));
  }
  Json cfg;
  cfg["mode"] = corpus::mode_name(mode);
  cfg["beam"] = a.beam;
  cfg["normalize"] = a.normalize;
  cfg["echo_gold"] = a.echo_gold;
  std::vector<std::pair<std::string, std::string>> named;
  for (const auto& [p, bytes] : files) named.emplace_back(p.filename().string(), bytes);
  const auto m = manifest("eval", cfg, Json::object(), inputs, named);
  for (const auto& [p, bytes] : files) io::write_file_atomic(p, bytes);
  io::write_file_atomic(sidecar(a.report, ".manifest.json"), m.dump(2) + "\n");
  out << metrics::report_table(rep, fs::path(a.data).filename().string());
}

struct ReconstructArgs {
  std::string ckpt, input = "-", output = "-";
  std::size_t beam = 1;
};

void cmd_reconstruct(const ReconstructArgs& a, std::ostream& out) {
  std::vector<InputRecord> inputs;
  const auto ckpt = load_ckpt(a.ckpt, inputs);
  const std::string text = a.input == "-" ? read_stream(std::cin) : io::read_file(a.input);
  std::string result;
  std::size_t line_number = 0, pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      result += "\n";
      continue;
    }
    corpus::Dataset one{corpus::parse_query_row(line, ckpt.mode, line_number)};
    const auto recon = trainer::reconstruct_all(one, ckpt, a.beam);
    result += corpus::decode_ids(recon[0].ids, ckpt.vocab, ckpt.mode).str() + "\n";
  }
  if (a.output == "-") {
    out << result;
  } else {
    io::write_file_atomic(a.output, result);
  }
}

struct RulesArgs {
  std::string ckpt, rules, report;
  std::size_t beam = 1;
  bool echo_gold = false;
};

void cmd_rules(const RulesArgs& a, std::ostream& out) {
  std::vector<InputRecord> inputs;
  if (a.ckpt.empty() && !a.echo_gold) throw UsageError("--ckpt is required unless --echo-gold is set");
  const auto table = a.rules.empty() ? rules::builtin_rules()
                                     : rules::parse_rules(read_input("rules", a.rules, inputs));
  std::vector<corpus::Word> preds;
  if (a.echo_gold) {
    for (const auto& r : table) preds.push_back(r.gold);
  } else {
    const auto ckpt = load_ckpt(a.ckpt, inputs);
    const auto recon = trainer::reconstruct_all(rules::make_rule_testset(table), ckpt, a.beam);
    for (const auto& r : recon) preds.push_back(corpus::decode_ids(r.ids, ckpt.vocab, ckpt.mode));
  }
  std::vector<rules::RuleOutcome> outcomes;
  for (std::size_t i = 0; i < table.size(); ++i) {
    outcomes.push_back(rules::score_rule_prediction(table[i], preds[i]));
  }
  const auto report = rules::rule_report_json(table, outcomes);
  Json cfg;
  cfg["rules"] = a.rules.empty() ? "builtin" : a.rules;
  cfg["beam"] = a.beam;
  cfg["echo_gold"] = a.echo_gold;
  const auto m = manifest("rules", cfg, Json::object(), inputs,
                          {{fs::path(a.report).filename().string(), report}});
  io::write_file_atomic(a.report, report);
  io::write_file_atomic(sidecar(a.report, ".manifest.json"), m.dump(2) + "\n");
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table[i].id << "\t" << table[i].label() << "\t" << preds[i].str() << "\t"
        << (outcomes[i].passed ? "pass" : "fail") << "\n";
  }
  out << "rules passed: " << rules::pass_count(outcomes) << "/" << table.size() << "\n";
}

struct EmbeddingsArgs {
  std::string ckpt, lang, out, csv, newick;
};

void cmd_embeddings(const EmbeddingsArgs& a, std::ostream& out) {
  std::vector<InputRecord> inputs;
  const auto ckpt = load_ckpt(a.ckpt, inputs);
  const auto lang = corpus::parse_language(a.lang);
  if (!lang) throw UsageError("unknown language '" + a.lang + "'");
  const auto emb = analysis::extract_embeddings(ckpt, *lang);
  const auto dendro = analysis::ward_clustering(emb.matrix, emb.labels);

  Json j;
  j["format"] = "protolens-embeddings";
  j["version"] = 1;
  j["language"] = corpus::language_name(*lang);
  j["labels"] = emb.labels;
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < emb.matrix.rows(); ++r) {
    std::vector<double> row(emb.matrix.row(r).begin(), emb.matrix.row(r).end());
    rows.push_back(row);
  }
  j["vectors"] = std::move(rows);
  j["dendrogram"] = Json::parse(analysis::dendrogram_json(dendro));
  j["newick"] = analysis::to_newick(dendro);

  std::vector<std::pair<fs::path, std::string>> files = {{a.out, j.dump(2) + "\n"}};
  if (!a.csv.empty()) files.emplace_back(a.csv, analysis::embeddings_csv(emb));
  if (!a.newick.empty()) files.emplace_back(a.newick, analysis::to_newick(dendro) + "\n");
  std::vector<std::pair<std::string, std::string>> named;
  for (const auto& [p, bytes] : files) named.emplace_back(p.filename().string(), bytes);
  const auto m = manifest("embeddings", {{"language", corpus::language_name(*lang)}},
                          Json::object(), inputs, named);
  for (const auto& [p, bytes] : files) io::write_file_atomic(p, bytes);
  io::write_file_atomic(sidecar(a.out, ".manifest.json"), m.dump(2) + "\n");
  out << analysis::to_newick(dendro) << "\n";
}

struct AttentionArgs {
  std::string ckpt, data, out, normalization = "language";
};

void cmd_attention(const AttentionArgs& a, std::ostream& out) {
  std::vector<InputRecord> inputs;
  const auto ckpt = load_ckpt(a.ckpt, inputs);
  analysis::AttentionNormalization policy;
  if (a.normalization == "language") {
    policy = analysis::AttentionNormalization::LanguageThenRow;
  } else if (a.normalization == "row") {
    policy = analysis::AttentionNormalization::RowOnly;
  } else {
    throw UsageError("--normalization must be language or row");
  }
  const auto ds = corpus::parse_dataset(read_input("data", a.data, inputs), ckpt.mode);
  if (ds.empty()) throw ValidationError("attention dataset is empty");
  const auto recon = trainer::reconstruct_all(ds, ckpt, 1);
  std::vector<model::AttentionTrace> traces;
  for (const auto& r : recon) traces.push_back(r.trace);
  const auto freq = analysis::language_frequencies(traces);
  const auto summary = analysis::attention_summary(traces, freq, ckpt.vocab, policy);

  Json j;
  j["format"] = "protolens-attention";
  j["version"] = 1;
  j["traces"] = traces.size();
  j["decoded_symbols"] = summary.total();
  j["normalization"] = a.normalization;
  Json f = Json::object();
  for (std::size_t l = 0; l < corpus::kNumDaughters; ++l) {
    f[std::string(corpus::language_name(corpus::kDaughterOrder[l]))] = freq[l];
  }
  j["language_frequency"] = std::move(f);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::vector<std::pair<std::string, std::string>> files = {
      {"by_position.csv", analysis::attention_csv(summary.by_position, "step")},
      {"by_symbol.csv", analysis::attention_csv(summary.by_symbol, "symbol")},
      {"summary.json", j.dump(2) + "\n"},
  };
  const auto m = manifest("attention", {{"normalization", a.normalization}}, Json::object(),
                          inputs, files);
  for (const auto& [name, bytes] : files) io::write_file_atomic(dir / name, bytes);
  io::write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
  out << "summarised " << traces.size() << " traces, " << summary.total() << " decoded symbols\n";
}

void print_error(std::ostream& err, const std::string& kind, const std::string& message) {
  Json j;
  j["error"] = kind;
  j["message"] = message;
  err << j.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latin proto-word reconstruction from Romance cognates", "protolens"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare", "Apply a dataset variant and split a cognate TSV");
  p->add_option("--input", prep.input, "Six-column cognate TSV")->required();
  p->add_option("--mode", prep.mode, "orth or ipa")->required();
  p->add_option("--variant", prep.variant, "Dataset variant (e.g. no_contrast)");
  p->add_option("--split", prep.split, "train,dev,test ratios");
  p->add_option("--seed", prep.seed, "Shuffle seed");
  p->add_option("--out", prep.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a prepared directory");
  t->add_option("--data", tr.data, "Directory written by prepare")->required();
  t->add_option("--config", tr.config_file, "key=value config file");
  t->add_option("--set", tr.sets, "Config override key=value (repeatable)");
  t->add_option("--mode", tr.mode, "orth or ipa (default: from the data manifest)");
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Edit-distance report of a checkpoint on a TSV");
  e->add_option("--data", ev.data, "Cognate TSV")->required();
  e->add_option("--ckpt", ev.ckpt, "Checkpoint");
  e->add_option("--report", ev.report, "JSON report path")->required();
  e->add_option("--mode", ev.mode, "orth or ipa (default: the checkpoint's)");
  e->add_option("--beam", ev.beam, "Beam width (1 = greedy)")->check(CLI::PositiveNumber);
  e->add_option("--normalize", ev.normalize, "Normalise by gold or pred length");
  e->add_option("--predictions", ev.predictions, "Write prediction/gold TSV");
  e->add_option("--substitutions", ev.substitutions, "Write substitution-count CSV");
  e->add_option("--filter", ev.filter, "Comma-separated symbols kept in the substitution CSV");
  e->add_flag("--exclude-singletons", ev.exclude_singletons, "Drop substitution cells of count 1");
  e->add_flag("--echo-gold", ev.echo_gold, "Use the gold forms as predictions");

  ReconstructArgs rc;
  auto* r = app.add_subcommand("reconstruct", "Reconstruct Latin for TSV cognate rows");
  r->add_option("--ckpt", rc.ckpt, "Checkpoint")->required();
  r->add_option("--input", rc.input, "Input rows (- for stdin)");
  r->add_option("--output", rc.output, "Output file (- for stdout)");
  r->add_option("--beam", rc.beam, "Beam width (1 = greedy)")->check(CLI::PositiveNumber);

  RulesArgs ru;
  auto* u = app.add_subcommand("rules", "Score a checkpoint on the sound-change rule test set");
  u->add_option("--ckpt", ru.ckpt, "Checkpoint");
  u->add_option("--rules", ru.rules, "Rule TSV (default: built-in table)");
  u->add_option("--report", ru.report, "JSON report path")->required();
  u->add_option("--beam", ru.beam, "Beam width (1 = greedy)")->check(CLI::PositiveNumber);
  u->add_flag("--echo-gold", ru.echo_gold, "Use the gold forms as predictions");

  EmbeddingsArgs em;
  auto* m = app.add_subcommand("embeddings", "Export and cluster per-language symbol vectors");
  m->add_option("--ckpt", em.ckpt, "Checkpoint")->required();
  m->add_option("--lang", em.lang, "Language name or code")->required();
  m->add_option("--out", em.out, "JSON output path")->required();
  m->add_option("--csv", em.csv, "Also write the vectors as CSV");
  m->add_option("--newick", em.newick, "Also write the dendrogram as Newick");

  AttentionArgs at;
  auto* a = app.add_subcommand("attention", "Most-attended-language summaries");
  a->add_option("--ckpt", at.ckpt, "Checkpoint")->required();
  a->add_option("--data", at.data, "Cognate TSV")->required();
  a->add_option("--out", at.out, "Output directory")->required();
  a->add_option("--normalization", at.normalization, "language or row");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    print_error(err, "usage_error", ex.what());
    return kExitUsage;
  }

  try {
    if (p->parsed()) cmd_prepare(prep, out);
    if (t->parsed()) cmd_train(tr, out, err);
    if (e->parsed()) cmd_eval(ev, out);
    if (r->parsed()) cmd_reconstruct(rc, out);
    if (u->parsed()) cmd_rules(ru, out);
    if (m->parsed()) cmd_embeddings(em, out);
    if (a->parsed()) cmd_attention(at, out);
  } catch (const UsageError& ex) {
    print_error(err, ex.kind(), ex.what());
    return kExitUsage;
  } catch (const Error& ex) {
    print_error(err, ex.kind(), ex.what());
    return kExitRuntime;
  } catch (const fs::filesystem_error& ex) {
    print_error(err, "io_error", ex.what());
    return kExitRuntime;
  } catch (const std::exception& ex) {
    print_error(err, "internal_error", ex.what());
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace protolens::cli
