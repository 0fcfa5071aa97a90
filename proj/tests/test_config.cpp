// tests/test_config.cpp

#include <doctest.h>

#include <fstream>

#include "eda/config.hpp"
#include "eda/errors.hpp"
#include "oracles.hpp"

using namespace eda::config;

TEST_CASE("defaults follow the documented presets") {
  RunConfig rc;
  CHECK(rc.infer().tau == 0.5);
  CHECK(rc.infer().activity_threshold == 0.5);
  CHECK(rc.infer().median_filter_frames == 11);
  CHECK(rc.train().alpha == 1.0);
  CHECK(rc.score().collar_s == 0.25);
  CHECK(rc.frontend().feature_dim() == 345);
  CHECK(rc.model() == eda::model::ModelConfig::full());
  CHECK(rc.provenance("infer.tau") == Provenance::kDefault);
}

TEST_CASE("file then flag precedence with provenance") {
  RunConfig rc;
  rc.load_text("# comment\ninfer.tau = 0.3\n\nmodel.preset = toy  # trailing\n");
  CHECK(rc.get_real("infer.tau") == 0.3);
  CHECK(rc.provenance("infer.tau") == Provenance::kFile);
  rc.set("infer.tau", "0.7", Provenance::kFlag);
  CHECK(rc.infer().tau == 0.7);
  CHECK(rc.provenance("infer.tau") == Provenance::kFlag);
  CHECK(rc.model() == eda::model::ModelConfig::toy());
  rc.set_assignment("model.d_model=32", Provenance::kFlag);
  CHECK(rc.model().encoder.d_model == 32);
}

TEST_CASE("invalid input is rejected") {
  RunConfig rc;
  CHECK_THROWS_AS(rc.set("no.such_key", "1", Provenance::kFlag), eda::ConfigInvalid);
  CHECK_THROWS_AS(rc.set("infer.tau", "abc", Provenance::kFlag), eda::ConfigInvalid);
  CHECK_THROWS_AS(rc.set("train.order", "random", Provenance::kFlag), eda::ConfigInvalid);
  CHECK_THROWS_AS(rc.set("train.epochs", "2.5", Provenance::kFlag), eda::ConfigInvalid);
  CHECK_THROWS_AS(rc.set_assignment("train.epochs", Provenance::kFlag), eda::ConfigInvalid);
  try {
    rc.load_text("infer.tau = 0.5\nthis line is bad\n");
    FAIL("expected ParseError");
  } catch (const eda::ParseError &e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(rc.load_file("/nonexistent/config"), eda::IoError);
}

TEST_CASE("literal values") {
  RunConfig rc;
  rc.set("infer.oracle_speakers", "2", Provenance::kFlag);
  CHECK(rc.infer().oracle_speakers == 2);
  rc.set("infer.oracle_speakers", "none", Provenance::kFlag);
  CHECK(!rc.infer().oracle_speakers);
  rc.set("infer.oracle_speakers", "ref", Provenance::kFlag);
  CHECK(rc.is_literal("infer.oracle_speakers", "ref"));
  rc.set("sim.noise_snr_db", "none", Provenance::kFlag);
  CHECK(!rc.corpus().spec.noise_snr_db);
  rc.set("infer.probe", "last:4", Provenance::kFlag);
  CHECK(rc.infer().probe.kind == eda::infer::Probe::Kind::kLast);
  CHECK(rc.infer().max_attractors == 0);
  rc.set("infer.max_attractors", "5", Provenance::kFlag);
  CHECK(rc.infer().max_attractors == 5);
  rc.set("infer.max_attractors", "0", Provenance::kFlag);
  CHECK_THROWS_AS(rc.infer(), eda::ConfigInvalid);
}

TEST_CASE("a snapshot reloads to the same values") {
  RunConfig rc;
  rc.set("run.seed", "1234", Provenance::kFlag);
  rc.set("train.order", "chronological", Provenance::kFlag);
  rc.set("sim.overlap_ratio", "0.2", Provenance::kFlag);
  const std::string snap = rc.snapshot();
  const std::string dir = oracle::tmp_dir("config");
  std::ofstream(dir + "/snap") << snap;
  RunConfig back;
  back.load_file(dir + "/snap");
  for (const KeySpec &k : schema()) CHECK(back.get(k.key) == rc.get(k.key));
  CHECK(back.seed() == 1234);
}

TEST_CASE("help lists every key") {
  const std::string h = schema_help();
  for (const KeySpec &k : schema()) CHECK(h.find(k.key) != std::string::npos);
  CHECK(find_key("infer.tau") != nullptr);
  CHECK(find_key("infer.nothing") == nullptr);
}
