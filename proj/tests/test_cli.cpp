// End-to-end checks against the built CLI binary (path in $EPD_CLI).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string cli() {
  const char* p = std::getenv("EPD_CLI");
  return p ? p : "./epd_cli";
}

int run(const std::string& args) {
  const std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("epd_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

// Small but non-trivial dataset: fast enough for repeated CLI training runs.
void gen_small(const TempDir& dir, uint64_t seed) {
  const int rc = run("gen-data --seed " + std::to_string(seed) + " --out " +
                     (dir / "data") +
                     " --num-images 60 --test-images 20 --num-predicates 8"
                     " --zipf-s 1.0 --similar-pairs 1:7:0.3 --neg-frac 0.5"
                     " --config " + (dir / "gen.cfg"));
  REQUIRE(rc == 0);
}

void write_gen_cfg(const TempDir& dir) {
  std::ofstream out(dir / "gen.cfg");
  out << "# generator settings for the CLI tests\n";
  out << "min_objects = 3\n";
  out << "max_objects = 5\n";
  out << "num_object_classes = 6\n";
  out << "feature_dim = 12\n";
  out << "noise_sigma = 0.2\n";
  out << "min_relations = 2\n";
  out << "max_relations = 5\n";
}

void write_run_cfg(const TempDir& dir) {
  std::ofstream out(dir / "run.cfg");
  out << "d_s = 6\nd_g = 6\nd_o = 16\nd_p = 16\nd_h = 16\n";
  out << "head = 2\nbody = 3\ntail = 3\n";
  out << "epochs = 2\nbatch_size = 8\nlr = 0.01\n";
  out << "k_list = 3,5\neval_every = 2\n";
}

}  // namespace

TEST_CASE("gen-data: same seed twice is bitwise identical, different seed differs") {
  TempDir dir("gen");
  write_gen_cfg(dir);
  gen_small(dir, 42);
  const std::string train1 = slurp(dir / "data/train.jsonl");
  const std::string test1 = slurp(dir / "data/test.jsonl");
  fs::remove_all(dir / "data");
  gen_small(dir, 42);
  CHECK(slurp(dir / "data/train.jsonl") == train1);
  CHECK(slurp(dir / "data/test.jsonl") == test1);
  fs::remove_all(dir / "data");
  gen_small(dir, 43);
  CHECK(slurp(dir / "data/train.jsonl") != train1);
}

TEST_CASE("partition command emits blocks of the requested cardinalities") {
  TempDir dir("part");
  write_gen_cfg(dir);
  gen_small(dir, 7);
  const int rc = run("partition --data " + (dir / "data/train.jsonl") +
                     " --cardinalities 2,3,3 --out " + (dir / "partition.json"));
  REQUIRE(rc == 0);
  json j = json::parse(slurp(dir / "partition.json"));
  CHECK(j["head"].size() == 2);
  CHECK(j["body"].size() == 3);
  CHECK(j["tail"].size() == 3);
  CHECK(j["counts"].size() == 8);
  // head classes carry the highest counts
  int64_t min_head = INT64_MAX, max_tail = 0;
  for (const auto& c : j["head"])
    min_head = std::min<int64_t>(min_head,
                                 j["counts"][std::to_string(c.get<int64_t>())]);
  for (const auto& c : j["tail"])
    max_tail = std::max<int64_t>(max_tail,
                                 j["counts"][std::to_string(c.get<int64_t>())]);
  CHECK(min_head >= max_tail);
}

TEST_CASE("train/eval pipeline is reproducible end to end") {
  TempDir dir("repro");
  write_gen_cfg(dir);
  write_run_cfg(dir);
  gen_small(dir, 11);

  auto pipeline = [&](const std::string& tag) {
    REQUIRE(run("train --data " + (dir / "data/train.jsonl") + " --config " +
                (dir / "run.cfg") + " --seed 3 --out " + (dir / tag)) == 0);
    REQUIRE(run("eval --ckpt " + (dir / tag + "/final") + " --data " +
                (dir / "data/test.jsonl") + " --k 3,5 --out " + (dir / tag + "/rep")) ==
            0);
  };
  pipeline("run_a");
  pipeline("run_b");

  CHECK(slurp(dir / "run_a/train_log.jsonl") == slurp(dir / "run_b/train_log.jsonl"));
  CHECK(slurp(dir / "run_a/rep/report.json") == slurp(dir / "run_b/rep/report.json"));
  CHECK(slurp(dir / "run_a/final/manifest.json") ==
        slurp(dir / "run_b/final/manifest.json"));
  // every parameter payload identical
  for (const auto& e : fs::directory_iterator(dir / "run_a/final")) {
    const std::string name = e.path().filename().string();
    CHECK(slurp(dir / ("run_a/final/" + name)) == slurp(dir / ("run_b/final/" + name)));
  }
}

TEST_CASE("config precedence: CLI --set beats the file, file beats defaults") {
  TempDir dir("prec");
  write_gen_cfg(dir);
  write_run_cfg(dir);  // file sets epochs=2, lr=0.01, batch_size=8
  gen_small(dir, 13);

  REQUIRE(run("train --data " + (dir / "data/train.jsonl") + " --config " +
              (dir / "run.cfg") + " --set epochs=1 --set gamma=0.5 --seed 9 --out " +
              (dir / "t")) == 0);

  // epochs: flag (1) overrode file (2)
  std::istringstream log(slurp(dir / "t/train_log.jsonl"));
  int lines = 0;
  std::string line;
  while (std::getline(log, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 1);

  json manifest = json::parse(slurp(dir / "t/final/manifest.json"));
  // lr: file (0.01) overrode the default (0.0025)
  CHECK(manifest["config"]["lr"].get<double>() == doctest::Approx(0.01));
  // gamma: flag (0.5) overrode the default (0.01)
  CHECK(manifest["config"]["gamma"].get<double>() == doctest::Approx(0.5));
  // seed from the dedicated flag
  CHECK(manifest["config"]["seed"].get<uint64_t>() == 9);
  // batch_size from file
  CHECK(manifest["config"]["batch_size"].get<int64_t>() == 8);
}

TEST_CASE("exit codes: usage 1, data 2") {
  TempDir dir("codes");
  write_gen_cfg(dir);
  write_run_cfg(dir);
  gen_small(dir, 17);
  REQUIRE(run("train --data " + (dir / "data/train.jsonl") + " --config " +
              (dir / "run.cfg") + " --set epochs=1 --out " + (dir / "t")) == 0);

  CHECK(run("bogus-subcommand") == 1);
  CHECK(run("train --data " + (dir / "data/train.jsonl") + " --config " +
            (dir / "run.cfg") + " --set not_a_key=1 --out " + (dir / "x")) == 1);
  CHECK(run("eval --ckpt " + (dir / "t/final") + " --data /nonexistent.jsonl") == 2);
  CHECK(run("explain --ckpt " + (dir / "t/final") + " --data " +
            (dir / "data/test.jsonl") + " --image no_such_image --subj 0 --obj 1") ==
        2);
}

TEST_CASE("eval honors lambda override and k list") {
  TempDir dir("evalflags");
  write_gen_cfg(dir);
  write_run_cfg(dir);
  gen_small(dir, 19);
  REQUIRE(run("train --data " + (dir / "data/train.jsonl") + " --config " +
              (dir / "run.cfg") + " --set epochs=1 --out " + (dir / "t")) == 0);

  REQUIRE(run("eval --ckpt " + (dir / "t/final") + " --data " +
              (dir / "data/test.jsonl") + " --k 2 --lambda 1,0,0 --out " +
              (dir / "rep1")) == 0);
  json rep = json::parse(slurp(dir / "rep1/report.json"));
  CHECK(rep["k_values"].size() == 1);
  CHECK(rep["k_values"][0].get<int64_t>() == 2);
  // csv written alongside
  CHECK(fs::exists(dir / "rep1/report.csv"));

  // structural mismatch rejected without --force, accepted with it
  CHECK(run("eval --ckpt " + (dir / "t/final") + " --data " +
            (dir / "data/test.jsonl") + " --set d_h=64") == 2);
  CHECK(run("eval --ckpt " + (dir / "t/final") + " --data " +
            (dir / "data/test.jsonl") + " --set d_h=64 --force") == 0);
}

TEST_CASE("explain prints three panels with top rows") {
  TempDir dir("explain");
  write_gen_cfg(dir);
  write_run_cfg(dir);
  gen_small(dir, 23);
  REQUIRE(run("train --data " + (dir / "data/train.jsonl") + " --config " +
              (dir / "run.cfg") + " --set epochs=1 --out " + (dir / "t")) == 0);

  // find an annotated pair in the test set
  std::istringstream data(slurp(dir / "data/test.jsonl"));
  std::string line;
  std::getline(data, line);  // header
  std::getline(data, line);
  json rec = json::parse(line);
  const std::string image_id = rec["image_id"];
  const int64_t subj = rec["relations"][0]["subj"];
  const int64_t obj = rec["relations"][0]["obj"];

  REQUIRE(run("explain --ckpt " + (dir / "t/final") + " --data " +
              (dir / "data/test.jsonl") + " --image " + image_id + " --subj " +
              std::to_string(subj) + " --obj " + std::to_string(obj) +
              " --top 1 --out " + (dir / "explain.json")) == 0);
  json ex = json::parse(slurp(dir / "explain.json"));
  REQUIRE(ex["panels"].size() == 3);
  for (const auto& panel : ex["panels"]) CHECK(panel["top"].size() == 1);
  // scores within each panel sum to at most 1
  REQUIRE(run("explain --ckpt " + (dir / "t/final") + " --data " +
              (dir / "data/test.jsonl") + " --image " + image_id + " --subj " +
              std::to_string(subj) + " --obj " + std::to_string(obj) +
              " --top 7 --out " + (dir / "explain7.json")) == 0);
  json ex7 = json::parse(slurp(dir / "explain7.json"));
  for (const auto& panel : ex7["panels"]) {
    double total = 0.0;
    for (const auto& row : panel["top"]) total += row["score"].get<double>();
    CHECK(total <= 1.0 + 1e-9);
  }
}

TEST_CASE("ablate with one mode writes a single comparison row") {
  TempDir dir("ablate1");
  write_gen_cfg(dir);
  write_run_cfg(dir);
  gen_small(dir, 29);
  REQUIRE(run("ablate --data " + (dir / "data/train.jsonl") + " --test " +
              (dir / "data/test.jsonl") + " --config " + (dir / "run.cfg") +
              " --set epochs=1 --seed 31 --modes multi_nested --out " +
              (dir / "ab")) == 0);
  json rows = json::parse(slurp(dir / "ab/ablate_report.json"));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0]["mode"] == "multi_nested");
  CHECK(rows[0].contains("mean"));
  CHECK(rows[0].contains("tail"));

  CHECK(run("ablate --data " + (dir / "data/train.jsonl") + " --modes nonsense") == 1);
}
