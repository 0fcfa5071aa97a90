// tests/test_cli.cpp

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "eda/cli.hpp"
#include "eda/config.hpp"
#include "eda/mixsim.hpp"
#include "eda/score.hpp"
#include "oracles.hpp"

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "eda-diar");
  std::vector<const char *> argv;
  for (const auto &a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = eda::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string &p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("score of a file against itself is zero") {
  const std::string dir = oracle::tmp_dir("cli_score");
  std::ofstream(dir + "/r.rttm") << "SPEAKER r 1 0.00 2.00 <NA> <NA> A <NA> <NA>\n"
                                    "SPEAKER r 1 1.00 3.00 <NA> <NA> B <NA> <NA>\n";
  const Outcome o = run({"score", "--ref", dir + "/r.rttm", "--hyp", dir + "/r.rttm"});
  CHECK(o.code == eda::cli::kExitOk);
  CHECK(o.out.find("DER            0.00%") != std::string::npos);

  std::ofstream(dir + "/empty.rttm") << "";
  const Outcome u = run({"score", "--ref", dir + "/empty.rttm", "--hyp", dir + "/r.rttm"});
  CHECK(u.code == eda::cli::kExitRuntime);
  CHECK(u.err.find("DER undefined") != std::string::npos);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run({"score", "--bogus"}).code == eda::cli::kExitUsage);
  CHECK(run({"nosuchcommand"}).code == eda::cli::kExitUsage);
  CHECK(run({"infer", "--checkpoint", "x", "--tau", "abc"}).code == eda::cli::kExitUsage);
  CHECK(run({}).code == eda::cli::kExitUsage);
}

TEST_CASE("the executable reports exit codes") {
  const std::string cmd = std::string(EDA_DIAR_EXE) + " score --bogus >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
}

TEST_CASE("help enumerates every configuration key") {
  const Outcome o = run({"--help"});
  CHECK(o.code == eda::cli::kExitOk);
  for (const auto &k : eda::config::schema()) CHECK(o.out.find(k.key) != std::string::npos);
}

TEST_CASE("simulate, train, infer with a forced speaker count") {
  const std::string dir = oracle::tmp_dir("cli_pipeline");
  const std::vector<std::string> common{"--set", "sim.duration_s=8", "--set", "model.preset=toy",
                                        "--seed", "3"};
  auto with = [&](std::vector<std::string> a) {
    a.insert(a.end(), common.begin(), common.end());
    return run(a);
  };
  Outcome s = with({"simulate", "--n", "2", "--set", "sim.min_speakers=2", "--set",
                    "sim.max_speakers=2", "--out", dir + "/corpus"});
  REQUIRE(s.code == 0);
  CHECK(slurp(dir + "/corpus/config.snapshot").find("sim.n_mixtures = 2  # flag") != std::string::npos);
  CHECK(eda::sim::read_manifest(dir + "/corpus/manifest.jsonl").size() == 2);

  Outcome t = with({"train", "--manifest", dir + "/corpus/manifest.jsonl", "--epochs", "1",
                    "--set", "train.chunk_len_frames=40", "--out", dir + "/train"});
  REQUIRE(t.code == 0);
  CHECK(!slurp(dir + "/train/metrics.jsonl").empty());

  Outcome i = with({"infer", "--checkpoint", dir + "/train/last.ckpt", "--manifest",
                    dir + "/corpus/manifest.jsonl", "--oracle-speakers", "2", "--out", dir + "/infer"});
  REQUIRE(i.code == 0);
  const auto hyp = eda::score::read_rttm(dir + "/infer/hyp.rttm");
  std::map<std::string, std::set<std::string>> speakers;
  for (const auto &h : hyp) speakers[h.recording_id].insert(h.speaker_id);
  for (const auto &[rec, spk] : speakers) CHECK(spk.size() <= 2);
  const std::string counts = slurp(dir + "/infer/counts.tsv");
  CHECK(counts.find("mix00000\t") != std::string::npos);
  std::istringstream cs(counts);
  std::string line;
  std::getline(cs, line);
  int rows = 0;
  while (std::getline(cs, line)) {
    CHECK(line.substr(line.rfind('\t') + 1) == "2");
    ++rows;
  }
  CHECK(rows == 2);

  Outcome v = with({"viz", "--checkpoint", dir + "/train/last.ckpt", "--features",
                    dir + "/corpus/mix00000.feat", "--out", dir + "/viz"});
  REQUIRE(v.code == 0);
  CHECK(slurp(dir + "/viz/projection.csv").rfind("x,y,kind,index", 0) == 0);
}
