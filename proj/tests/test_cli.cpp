#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <json.hpp>
#include <sstream>

#include "miaforge/archive.hpp"
#include "miaforge/benchgen.hpp"
#include "miaforge/score_io.hpp"
#include "miaforge/synth.hpp"
#include "support/fixtures.hpp"

using namespace miaforge;
using fixture::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

Run mia(const std::string& args, const TempDir& scratch) {
  const auto out = scratch / "stdout.txt";
  const auto err = scratch / "stderr.txt";
  const auto cmd = std::string(MIA_FORGE_BIN) + " " + args + " > " + quoted(out) + " 2> " + quoted(err);
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, fixture::slurp(out), fixture::slurp(err)};
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

/// Simulated archive directory, labeled or not.
std::filesystem::path simulate(const TempDir& dir, const std::string& name, const std::string& extra = "") {
  const auto out = dir / name;
  const auto r = mia("simulate --members 20 --non-members 20 --seed 5 --out " + quoted(out) + " " + extra, dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  return out;
}

}  // namespace

TEST_CASE("attack loss writes one row per document and a run manifest") {
  TempDir dir;
  const auto archive = simulate(dir, "a");
  const auto csv = dir / "loss.csv";
  const auto r = mia("attack --archive " + quoted(archive) + " --method loss --out " + quoted(csv), dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(line_count(fixture::slurp(csv)) == 41);
  const auto manifest = nlohmann::json::parse(fixture::slurp(dir / "loss.csv.run.json"));
  CHECK(manifest["command"] == "attack");
  CHECK(manifest["archive_checksum"] == archive_checksum(archive));
  CHECK(manifest["uses_labels"] == false);
  CHECK(manifest.contains("config_hash"));

  const auto again = mia("attack --archive " + quoted(archive) + " --method loss --out " + quoted(dir / "b.csv"), dir);
  REQUIRE(again.code == 0);
  CHECK(nlohmann::json::parse(fixture::slurp(dir / "b.csv.run.json"))["config_hash"] == manifest["config_hash"]);
}

TEST_CASE("recall with RandNM is deterministic under a seed and flagged as label-using") {
  TempDir dir;
  const auto archive = simulate(dir, "a");
  std::string outputs[2];
  for (int i = 0; i < 2; ++i) {
    const auto csv = dir / ("r" + std::to_string(i) + ".csv");
    const auto r = mia("attack --archive " + quoted(archive) +
                           " --method recall --prefix-strategy randnm --n 12 --seed 7 --out " + quoted(csv),
                       dir);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.err.find("ground-truth labels") != std::string::npos);
    outputs[i] = fixture::slurp(csv);
  }
  CHECK(outputs[0] == outputs[1]);
  CHECK(nlohmann::json::parse(fixture::slurp(dir / "r0.csv.run.json"))["uses_labels"] == true);
}

TEST_CASE("unlabeled archives: EM-MIA runs, label-using methods refuse with exit 2") {
  TempDir dir;
  const auto archive = simulate(dir, "u", "--unlabeled");
  const auto em = mia("attack --archive " + quoted(archive) + " --method em-mia --out " + quoted(dir / "em.csv"), dir);
  CHECK_MESSAGE(em.code == 0, em.err);
  const auto top = mia("attack --archive " + quoted(archive) + " --method toppref --out " + quoted(dir / "t.csv"), dir);
  CHECK(top.code == 2);
  CHECK(top.err.find("label") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "t.csv"));
}

TEST_CASE("label-free methods give byte-identical scores on a label-stripped copy") {
  TempDir dir;
  const auto labeled = simulate(dir, "l");
  const auto stripped = simulate(dir, "s", "--unlabeled");
  for (const std::string method : {"loss", "ref", "zlib", "mink", "minkpp", "avg", "avgp", "rand", "em-mia"}) {
    CAPTURE(method);
    for (const std::string provider : {"none", "sim"}) {
      const auto a = dir / (method + provider + "-l.csv");
      const auto b = dir / (method + provider + "-s.csv");
      const std::string common = " --method " + method + " --provider " + provider + " --seed 3 --out ";
      REQUIRE(mia("attack --archive " + quoted(labeled) + common + quoted(a), dir).code == 0);
      REQUIRE(mia("attack --archive " + quoted(stripped) + common + quoted(b), dir).code == 0);
      CHECK(fixture::slurp(a) == fixture::slurp(b));
    }
  }
}

TEST_CASE("eval joins on id and reports problems") {
  TempDir dir;
  const auto archive = simulate(dir, "a");
  const auto labels = load_archive_labels(archive);
  ScoreVector perfect{labels.ids, {}, "truth"};
  for (int v : labels.values) perfect.scores.push_back(v);
  write_scores_csv(perfect, dir / "p.csv");
  auto r = mia("eval --scores " + quoted(dir / "p.csv") + " --labels " + quoted(archive), dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(nlohmann::json::parse(r.out)["auc"] == 1.0);

  ScoreVector reversed{{}, {}, "truth"};
  for (std::size_t i = perfect.size(); i-- > 0;) {
    reversed.ids.push_back(perfect.ids[i]);
    reversed.scores.push_back(perfect.scores[i]);
  }
  write_scores_csv(reversed, dir / "rev.csv");
  const auto shuffled = mia("eval --scores " + quoted(dir / "rev.csv") + " --labels " + quoted(archive), dir);
  CHECK(shuffled.out == r.out);

  ScoreVector missing = perfect;
  missing.ids.pop_back();
  missing.scores.pop_back();
  write_scores_csv(missing, dir / "m.csv");
  r = mia("eval --scores " + quoted(dir / "m.csv") + " --labels " + quoted(archive), dir);
  CHECK(r.code == 2);
  CHECK(r.err.find(perfect.ids.back()) != std::string::npos);

  fixture::spit(dir / "one.jsonl", "{\"id\":\"a\",\"label\":1}\n{\"id\":\"b\",\"label\":1}\n");
  write_scores_csv(ScoreVector{{"a", "b"}, {1, 2}, "x"}, dir / "ab.csv");
  r = mia("eval --scores " + quoted(dir / "ab.csv") + " --labels " + quoted(dir / "one.jsonl"), dir);
  CHECK(r.code == 3);
}

TEST_CASE("benchgen end to end") {
  TempDir dir;
  BlobConfig bc;
  bc.clusters = 3;
  bc.points_per_side = 300;
  bc.dim = 32;
  const auto pools = generate_blobs(bc);
  save_embeddings(pools.members, dir / "m");
  save_embeddings(pools.non_members, dir / "n");
  const std::string base = "benchgen --members " + quoted(dir / "m") + " --non-members " + quoted(dir / "n") +
                           " --k 3 --min-dist 0.2 --seed 1 --out ";

  auto r = mia(base + quoted(dir / "o1") + " --size 50 --difficulty easy,random,mix1", dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto easy = read_labels_jsonl(dir / "o1" / "easy" / "split.jsonl");
  CHECK(easy.size() == 100);
  CHECK(easy.positives() == 50);

  const auto random = read_labels_jsonl(dir / "o1" / "random" / "split.jsonl");
  const auto mix1 = read_labels_jsonl(dir / "o1" / "mix1" / "split.jsonl");
  CHECK(std::vector<std::string>(random.ids.begin(), random.ids.begin() + 50) ==
        std::vector<std::string>(mix1.ids.begin(), mix1.ids.begin() + 50));

  r = mia(base + quoted(dir / "o2") + " --size 50 --difficulty easy,random,mix1", dir);
  REQUIRE(r.code == 0);
  for (const std::string d : {"easy", "random", "mix1"}) {
    CHECK(fixture::slurp(dir / "o1" / d / "split.jsonl") == fixture::slurp(dir / "o2" / d / "split.jsonl"));
    CHECK(fixture::slurp(dir / "o1" / d / "provenance.json") == fixture::slurp(dir / "o2" / d / "provenance.json"));
  }
  CHECK(std::filesystem::exists(dir / "o1" / "run_manifest.json"));

  r = mia(base + quoted(dir / "o3") + " --difficulty easy --size 5000", dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("shortfall") != std::string::npos);
}

TEST_CASE("validate") {
  TempDir dir;
  const auto archive = simulate(dir, "a");
  auto r = mia("validate " + quoted(archive) + " --strict", dir);
  CHECK_MESSAGE(r.code == 0, r.err);
  CHECK(nlohmann::json::parse(r.out)["n"] == 40);
  fixture::spit(archive / "uncond.f64", "broken");
  r = mia("validate " + quoted(archive), dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("checksum") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
  TempDir dir;
  CHECK(mia("attack --method loss", dir).code == 2);
  CHECK(mia("frobnicate", dir).code == 2);
  const auto archive = simulate(dir, "a");
  CHECK(mia("attack --archive " + quoted(archive) + " --method nope --out " + quoted(dir / "x.csv"), dir).code == 2);
}
