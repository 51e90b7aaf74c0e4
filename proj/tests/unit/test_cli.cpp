// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "protolens/cli.hpp"
#include "protolens/io.hpp"
#include "protolens/rules.hpp"

using namespace protolens;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

/// A fresh scratch directory removed on destruction.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name)
      : dir(fs::temp_directory_path() / ("protolens_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& f) const { return (dir / f).string(); }
};

std::string write_corpus(const Scratch& s, std::size_t n) {
  const auto ds = rules::generate_synthetic_corpus(rules::builtin_rules(), n, 42);
  const auto path = s / "corpus.tsv";
  io::write_file_atomic(path, corpus::serialize_dataset(ds));
  return path;
}

std::vector<std::string> tiny_model_sets() {
  return {"--set", "embed_dim=8",  "--set", "hidden_dim=12", "--set", "mlp_hidden=12",
          "--set", "lang_embed_dim=4", "--set", "max_epochs=2", "--set", "batch_size=16"};
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("prepare writes an 80/8/12 split reproducibly") {
  Scratch s("prepare");
  const auto input = write_corpus(s, 100);
  const auto a = run({"prepare", "--input", input, "--mode", "ipa", "--seed", "3", "--out", s / "a"});
  REQUIRE(a.code == 0);
  CHECK(count_lines(io::read_file(s / "a/train.tsv")) == 80);
  CHECK(count_lines(io::read_file(s / "a/dev.tsv")) == 8);
  CHECK(count_lines(io::read_file(s / "a/test.tsv")) == 12);

  REQUIRE(run({"prepare", "--input", input, "--mode", "ipa", "--seed", "3", "--out", s / "b"}).code == 0);
  for (const char* f : {"train.tsv", "dev.tsv", "test.tsv", "vocab.json"}) {
    CHECK(io::read_file(s / (std::string("a/") + f)) == io::read_file(s / (std::string("b/") + f)));
  }
  const auto ma = nlohmann::json::parse(io::read_file(s / "a/manifest.json"));
  const auto mb = nlohmann::json::parse(io::read_file(s / "b/manifest.json"));
  CHECK(ma["format"] == "protolens-manifest");
  CHECK(ma["outputs"] == mb["outputs"]);
  CHECK(ma["inputs"][0]["sha256"] == io::sha256_hex(io::read_file(input)));
  CHECK(ma["config"]["sizes"] == nlohmann::json::array({80, 8, 12}));

  REQUIRE(run({"prepare", "--input", input, "--mode", "ipa", "--seed", "4", "--out", s / "c"}).code == 0);
  CHECK(io::read_file(s / "a/train.tsv") != io::read_file(s / "c/train.tsv"));
}

TEST_CASE("usage errors exit with code 2 and a JSON line") {
  Scratch s("usage");
  const auto input = write_corpus(s, 10);
  const auto bad_variant =
      run({"prepare", "--input", input, "--mode", "orth", "--variant", "no_contrast", "--out", s / "x"});
  CHECK(bad_variant.code == 2);
  const auto err = nlohmann::json::parse(bad_variant.err);
  CHECK(err["error"] == "usage_error");
  CHECK(err["message"].get<std::string>().find("ipa") != std::string::npos);

  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"prepare", "--mode", "ipa"}).code == 2);
  CHECK(run({"prepare", "--input", input, "--mode", "klingon", "--out", s / "x"}).code == 2);
  CHECK(run({"prepare", "--input", input, "--mode", "ipa", "--split", "0.5,0.5", "--out", s / "x"}).code == 2);
  CHECK(run({"eval", "--data", input, "--report", s / "r.json"}).code == 2);
}

TEST_CASE("runtime errors exit with code 1 and a JSON line") {
  Scratch s("runtime");
  const auto missing = run({"prepare", "--input", s / "nope.tsv", "--mode", "ipa", "--out", s / "x"});
  CHECK(missing.code == 1);
  CHECK(nlohmann::json::parse(missing.err).contains("message"));

  io::write_file_atomic(s / "broken.tsv", "a\tb\tc\n");
  const auto parse = run({"prepare", "--input", s / "broken.tsv", "--mode", "ipa", "--out", s / "x"});
  CHECK(parse.code == 1);
  CHECK(nlohmann::json::parse(parse.err)["error"] == "parse_error");

  io::write_file_atomic(s / "garbage.ckpt", "not a checkpoint");
  const auto ck = run({"rules", "--ckpt", s / "garbage.ckpt", "--report", s / "r.json"});
  CHECK(ck.code == 1);
  CHECK(nlohmann::json::parse(ck.err)["error"] == "checkpoint_error");
}

TEST_CASE("help and version") {
  const auto help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("prepare") != std::string::npos);
  const auto version = run({"--version"});
  CHECK(version.code == 0);
  CHECK(version.out == std::string(cli::kToolVersion) + "\n");
}

TEST_CASE("echoing gold scores perfectly") {
  Scratch s("echo");
  const auto input = write_corpus(s, 20);
  const auto ev = run({"eval", "--data", input, "--mode", "ipa", "--echo-gold", "--report", s / "r.json"});
  REQUIRE(ev.code == 0);
  const auto report = nlohmann::json::parse(io::read_file(s / "r.json"));
  CHECK(report["exact"] == 1.0);
  CHECK(report["average"] == 0.0);
  CHECK(report["n"] == 20);
  CHECK(fs::exists(s / "r.json.manifest.json"));

  const auto ru = run({"rules", "--echo-gold", "--report", s / "rules.json"});
  REQUIRE(ru.code == 0);
  CHECK(ru.out.find("rules passed: 33/33") != std::string::npos);
  CHECK(nlohmann::json::parse(io::read_file(s / "rules.json"))["passed"] == 33);
}

TEST_CASE("train, eval, reconstruct, embeddings and attention end to end") {
  Scratch s("pipeline");
  const auto input = write_corpus(s, 60);
  REQUIRE(run({"prepare", "--input", input, "--mode", "ipa", "--seed", "1", "--out", s / "data"}).code == 0);

  auto train_args = std::vector<std::string>{"train", "--data", s / "data", "--out", s / "m.ckpt", "--quiet"};
  for (const auto& a : tiny_model_sets()) train_args.push_back(a);
  const auto tr = run(train_args);
  REQUIRE(tr.code == 0);
  CHECK(tr.err.empty());
  CHECK(io::read_file(s / "m.ckpt").rfind("PROTOLNS", 0) == 0);
  CHECK(count_lines(io::read_file(s / "m.ckpt.log.csv")) == 3);
  const auto tm = nlohmann::json::parse(io::read_file(s / "m.ckpt.manifest.json"));
  CHECK(tm["config"]["hidden_dim"] == "12");
  CHECK(tm["config"]["mode"] == "phonetic");

  const auto ev = run({"eval", "--data", s / "data/test.tsv", "--ckpt", s / "m.ckpt", "--report",
                       s / "test.json", "--predictions", s / "pred.tsv", "--substitutions", s / "subs.csv"});
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("Avg, norm") != std::string::npos);
  CHECK(count_lines(io::read_file(s / "pred.tsv")) == 1 + count_lines(io::read_file(s / "data/test.tsv")));
  CHECK(io::read_file(s / "subs.csv").rfind("gold,pred,count\n", 0) == 0);

  const auto test_rows = io::read_file(s / "data/test.tsv");
  const auto first_row = test_rows.substr(0, test_rows.find('\n'));
  io::write_file_atomic(s / "query.tsv", first_row + "\n\n" + first_row + "\n");
  const auto rc = run({"reconstruct", "--ckpt", s / "m.ckpt", "--input", s / "query.tsv"});
  REQUIRE(rc.code == 0);
  const auto first = rc.out.substr(0, rc.out.find('\n'));
  CHECK(rc.out == first + "\n\n" + first + "\n");
  const auto preds = io::read_file(s / "pred.tsv");
  const auto second_line = preds.substr(preds.find('\n') + 1);
  CHECK(second_line.substr(0, second_line.find('\t')) == first);

  const auto em = run({"embeddings", "--ckpt", s / "m.ckpt", "--lang", "la", "--out", s / "emb.json",
                       "--newick", s / "emb.nwk", "--csv", s / "emb.csv"});
  REQUIRE(em.code == 0);
  const auto ej = nlohmann::json::parse(io::read_file(s / "emb.json"));
  CHECK(ej["labels"].size() == ej["vectors"].size());
  CHECK(ej["newick"].get<std::string>() + "\n" == io::read_file(s / "emb.nwk"));
  CHECK(run({"embeddings", "--ckpt", s / "m.ckpt", "--lang", "xx", "--out", s / "e.json"}).code == 2);

  const auto at = run({"attention", "--ckpt", s / "m.ckpt", "--data", s / "data/test.tsv", "--out", s / "att"});
  REQUIRE(at.code == 0);
  const auto aj = nlohmann::json::parse(io::read_file(s / "att/summary.json"));
  CHECK(aj["traces"] == count_lines(io::read_file(s / "data/test.tsv")));
  CHECK(fs::exists(s / "att/by_position.csv"));
  CHECK(fs::exists(s / "att/by_symbol.csv"));

  const auto ru = run({"rules", "--ckpt", s / "m.ckpt", "--report", s / "rules.json"});
  REQUIRE(ru.code == 0);
  CHECK(ru.out.find("rules passed: ") != std::string::npos);
}

TEST_CASE("config files and overrides") {
  Scratch s("config");
  const auto input = write_corpus(s, 30);
  REQUIRE(run({"prepare", "--input", input, "--mode", "ipa", "--out", s / "data"}).code == 0);
  io::write_file_atomic(s / "run.cfg",
                        "# tiny model\nembed_dim = 6\nhidden_dim = 6\nmlp_hidden = 6\n"
                        "lang_embed_dim = 3\nmax_epochs = 1\n");
  REQUIRE(run({"train", "--data", s / "data", "--config", s / "run.cfg", "--set", "hidden_dim=7",
               "--out", s / "m.ckpt", "--quiet"}).code == 0);
  const auto tm = nlohmann::json::parse(io::read_file(s / "m.ckpt.manifest.json"));
  CHECK(tm["config"]["embed_dim"] == "6");
  CHECK(tm["config"]["hidden_dim"] == "7");

  const auto bad = run({"train", "--data", s / "data", "--set", "hidden_size=7", "--out", s / "x.ckpt"});
  CHECK(bad.code == 1);
  CHECK(nlohmann::json::parse(bad.err)["error"] == "validation_error");
}
