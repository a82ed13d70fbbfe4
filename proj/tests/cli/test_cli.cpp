#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const char* kTool = FAIRRANK_TOOL_PATH;
const char* kGolden = FAIRRANK_GOLDEN_DIR;

struct CmdResult {
  int status = -1;
  std::string out;
};

// Runs the tool with the given arguments, capturing stdout. stderr goes to
// /dev/null: the tests assert on exit codes and machine-readable output.
CmdResult run_tool(const std::string& args) {
  CmdResult r;
  const std::string cmd = std::string(kTool) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int rc = pclose(pipe);
  if (WIFEXITED(rc)) r.status = WEXITSTATUS(rc);
  return r;
}

fs::path fresh_dir(const char* name) {
  const auto dir = fs::temp_directory_path() / "fairrank_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
}

// gen-synth + label-bias in one place, reused by several cases.
fs::path small_corpus(const char* name) {
  const auto dir = fresh_dir(name);
  auto gen = run_tool("gen-synth --queries 20 --candidates 4 --vocab 100 --seed 5 --out " +
                      dir.string());
  REQUIRE(gen.status == 0);
  auto lab = run_tool("label-bias --collection " + (dir / "collection.tsv").string() +
                      " --lexicon " + (dir / "lexicon.json").string() + " --out " +
                      (dir / "labels.tsv").string());
  REQUIRE(lab.status == 0);
  return dir;
}

}  // namespace

TEST_CASE("top-level help matches the golden file") {
  const auto r = run_tool("--help");
  CHECK(r.status == 0);
  CHECK(r.out == slurp(fs::path(kGolden) / "help.txt"));
}

TEST_CASE("every subcommand offers help") {
  for (const char* sub : {"label-bias", "gen-synth", "train", "rerank", "eval",
                          "grad-check", "grid-search"}) {
    const auto r = run_tool(std::string(sub) + " --help");
    CHECK(r.status == 0);
    CHECK(r.out.find("Usage") != std::string::npos);
  }
}

TEST_CASE("usage errors exit with code 1") {
  CHECK(run_tool("").status == 1);                       // missing subcommand
  CHECK(run_tool("--no-such-flag").status == 1);         // unknown flag
  CHECK(run_tool("definitely-not-a-command").status == 1);
  CHECK(run_tool("eval").status == 1);                   // missing required flags
}

TEST_CASE("missing input files exit with code 2") {
  const auto dir = fresh_dir("missing");
  const auto r = run_tool("label-bias --collection /nonexistent.tsv --out " +
                          (dir / "labels.tsv").string());
  CHECK(r.status == 2);
}

TEST_CASE("malformed input files exit with code 2") {
  const auto dir = fresh_dir("malformed");
  spit(dir / "run.tsv", "this is not\ta run file\n");
  spit(dir / "qrels.tsv", "q1 0 p1 1\n");
  spit(dir / "labels.tsv", "p1\t0.5\tmale\n");
  const auto r = run_tool("eval --run " + (dir / "run.tsv").string() + " --qrels " +
                          (dir / "qrels.tsv").string() + " --labels " +
                          (dir / "labels.tsv").string() + " --report " +
                          (dir / "report.json").string());
  CHECK(r.status == 2);
}

TEST_CASE("gen-synth writes a deterministic corpus") {
  const auto a = fresh_dir("gen_a");
  const auto b = fresh_dir("gen_b");
  const std::string spec = "gen-synth --queries 12 --candidates 3 --vocab 64 --seed 2 --out ";
  REQUIRE(run_tool(spec + a.string()).status == 0);
  REQUIRE(run_tool(spec + b.string()).status == 0);
  for (const char* f : {"collection.tsv", "queries.tsv", "run.tsv", "qrels.tsv",
                        "lexicon.json"}) {
    CAPTURE(f);
    const auto pa = slurp(a / f), pb = slurp(b / f);
    CHECK(!pa.empty());
    CHECK(pa == pb);
  }
}

TEST_CASE("gen-synth splits partition the corpus") {
  const auto dir = fresh_dir("gen_splits");
  const auto r = run_tool("gen-synth --queries 20 --candidates 3 --vocab 64 --seed 3 --splits "
                          "12,4,4 --out " + dir.string());
  REQUIRE(r.status == 0);
  for (const char* f : {"run.train.tsv", "run.dev.tsv", "run.test.tsv",
                        "qrels.train.tsv", "qrels.dev.tsv", "qrels.test.tsv"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / f));
  }
  std::size_t qrels_lines = 0;
  std::istringstream in(slurp(dir / "qrels.train.tsv"));
  for (std::string line; std::getline(in, line);) ++qrels_lines;
  CHECK(qrels_lines == 12);

  CHECK(run_tool("gen-synth --queries 20 --candidates 3 --vocab 64 --splits 20,4,4 --out " +
                 dir.string())
            .status == 2);  // splits exceed the corpus
}

TEST_CASE("label-bias labels every passage") {
  const auto dir = small_corpus("label");
  std::size_t lines = 0, collection = 0;
  std::istringstream labels(slurp(dir / "labels.tsv"));
  for (std::string line; std::getline(labels, line);) ++lines;
  std::istringstream coll(slurp(dir / "collection.tsv"));
  for (std::string line; std::getline(coll, line);) ++collection;
  CHECK(lines == collection);
}

TEST_CASE("eval on a rank-1 run reports perfect metrics") {
  const auto dir = fresh_dir("eval_gold");
  spit(dir / "run.tsv", "q1 Q0 p1 1 2.0 t\nq1 Q0 p2 2 1.0 t\n");
  spit(dir / "qrels.tsv", "q1 0 p1 1\n");
  spit(dir / "labels.tsv", "p1\t0.69\t1\np2\t-0.69\t-1\n");
  const auto r = run_tool("eval --run " + (dir / "run.tsv").string() + " --qrels " +
                          (dir / "qrels.tsv").string() + " --labels " +
                          (dir / "labels.tsv").string() + " --report " +
                          (dir / "report.json").string());
  REQUIRE(r.status == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(j["counts"]["queries"] == 1);
  CHECK(j["recall"]["value"] == 1.0);
  CHECK(j["mrr"] == 1.0);
  CHECK(j["ndcg"]["value"] == 1.0);
  CHECK(j["prf"]["male"] == 1.0);
  CHECK(j["prf"]["female"].is_null());
  CHECK(j["rab"].is_null());  // labels carry no side magnitudes
  // stdout repeats the report for piping.
  CHECK(nlohmann::json::parse(r.out) == j);
}

TEST_CASE("eval with a collection reports rab") {
  const auto dir = small_corpus("eval_rab");
  const auto r = run_tool("eval --run " + (dir / "run.tsv").string() + " --qrels " +
                          (dir / "qrels.tsv").string() + " --collection " +
                          (dir / "collection.tsv").string() + " --lexicon " +
                          (dir / "lexicon.json").string() + " --per-query " +
                          (dir / "per_query.tsv").string() + " --report " +
                          (dir / "report.json").string());
  REQUIRE(r.status == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(!j["rab"].is_null());
  CHECK(j["rab"].contains("5"));
  CHECK(fs::exists(dir / "per_query.tsv"));
}

TEST_CASE("grad-check exit codes follow the tolerance") {
  CHECK(run_tool("grad-check --fixtures 5 --seed 4").status == 0);
  CHECK(run_tool("grad-check --fixtures 5 --seed 4 --tolerance 1e-18").status == 3);
}

TEST_CASE("train, rerank and eval compose into a pipeline") {
  const auto dir = small_corpus("pipeline");
  const std::string train =
      "train --collection " + (dir / "collection.tsv").string() + " --queries " +
      (dir / "queries.tsv").string() + " --run " + (dir / "run.tsv").string() +
      " --qrels " + (dir / "qrels.tsv").string() + " --lexicon " +
      (dir / "lexicon.json").string() +
      " --regularizer ts --lambda 0.5 --epochs 2 --batch-size 8 --lr 1e-3 "
      "--vocab-buckets 1024 --d-emb 8 --d 8 --seed 6 --log " +
      (dir / "train.log").string() + " --out " + (dir / "model.bin").string();
  REQUIRE(run_tool(train).status == 0);
  CHECK(fs::exists(dir / "model.bin"));
  CHECK(fs::exists(dir / "train.log"));

  const std::string rerank =
      "rerank --checkpoint " + (dir / "model.bin").string() + " --collection " +
      (dir / "collection.tsv").string() + " --queries " + (dir / "queries.tsv").string() +
      " --run " + (dir / "run.tsv").string() + " --tag mine --out " +
      (dir / "reranked.tsv").string();
  REQUIRE(run_tool(rerank).status == 0);

  // Reranked file: same qid set, ranks ascending from 1, scores descending.
  std::istringstream in(slurp(dir / "reranked.tsv"));
  std::string qid, q0, pid, tag;
  int rank;
  double score;
  int last_rank = 0;
  double last_score = 0.0;
  std::string last_qid;
  std::size_t rows = 0;
  while (in >> qid >> q0 >> pid >> rank >> score >> tag) {
    CHECK(tag == "mine");
    if (qid == last_qid) {
      CHECK(rank == last_rank + 1);
      CHECK(score <= last_score);
    } else {
      CHECK(rank == 1);
    }
    last_qid = qid;
    last_rank = rank;
    last_score = score;
    ++rows;
  }
  CHECK(rows > 0);

  const auto ev = run_tool("eval --run " + (dir / "reranked.tsv").string() + " --qrels " +
                           (dir / "qrels.tsv").string() + " --collection " +
                           (dir / "collection.tsv").string() + " --lexicon " +
                           (dir / "lexicon.json").string() + " --report " +
                           (dir / "report.json").string());
  CHECK(ev.status == 0);

  // A second identical train run reproduces the checkpoint byte for byte.
  const std::string retrain =
      "train --collection " + (dir / "collection.tsv").string() + " --queries " +
      (dir / "queries.tsv").string() + " --run " + (dir / "run.tsv").string() +
      " --qrels " + (dir / "qrels.tsv").string() + " --lexicon " +
      (dir / "lexicon.json").string() +
      " --regularizer ts --lambda 0.5 --epochs 2 --batch-size 8 --lr 1e-3 "
      "--vocab-buckets 1024 --d-emb 8 --d 8 --seed 6 --out " +
      (dir / "model2.bin").string();
  REQUIRE(run_tool(retrain).status == 0);
  CHECK(slurp(dir / "model.bin") == slurp(dir / "model2.bin"));
}

TEST_CASE("rerank rejects unknown ids") {
  const auto dir = small_corpus("rerank_ids");
  const std::string train =
      "train --collection " + (dir / "collection.tsv").string() + " --queries " +
      (dir / "queries.tsv").string() + " --run " + (dir / "run.tsv").string() +
      " --qrels " + (dir / "qrels.tsv").string() +
      " --epochs 1 --batch-size 8 --lr 1e-3 --vocab-buckets 1024 --d-emb 8 --d 8 "
      "--out " + (dir / "model.bin").string();
  REQUIRE(run_tool(train).status == 0);

  spit(dir / "bad_run.tsv", "q00001 Q0 not_a_pid 1 1.0 t\n");
  const auto r = run_tool("rerank --checkpoint " + (dir / "model.bin").string() +
                          " --collection " + (dir / "collection.tsv").string() +
                          " --queries " + (dir / "queries.tsv").string() + " --run " +
                          (dir / "bad_run.tsv").string() + " --out " +
                          (dir / "out.tsv").string());
  CHECK(r.status == 2);
}

TEST_CASE("grid-search emits a structured report") {
  const auto dir = small_corpus("grid");
  const auto r = run_tool(
      "grid-search --collection " + (dir / "collection.tsv").string() + " --queries " +
      (dir / "queries.tsv").string() + " --run " + (dir / "run.tsv").string() +
      " --qrels " + (dir / "qrels.tsv").string() + " --dev-run " +
      (dir / "run.tsv").string() + " --dev-qrels " + (dir / "qrels.tsv").string() +
      " --lexicon " + (dir / "lexicon.json").string() +
      " --regularizer ts --grid 0.1,1 --epochs 1 --batch-size 8 --lr 1e-3 "
      "--vocab-buckets 1024 --d-emb 8 --d 8 --out " + (dir / "grid.json").string());
  REQUIRE(r.status == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "grid.json"));
  CHECK(j.contains("chosen_lambda"));
  CHECK(j.contains("constraint_met"));
  CHECK(j.contains("baseline"));
  REQUIRE(j["entries"].size() == 2);
  CHECK(j["entries"][0]["lambda"] == 0.1);
  CHECK(j["entries"][0].contains("report"));
}
