// src/cli.cpp

#include "eda/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "eda/config.hpp"
#include "eda/errors.hpp"
#include "eda/featfront.hpp"
#include "eda/infer.hpp"
#include "eda/mixsim.hpp"
#include "eda/model.hpp"
#include "eda/score.hpp"
#include "eda/trainengine.hpp"

namespace eda::cli {

namespace fs = std::filesystem;

namespace {

// Usage problems detected after CLI11 parsing (bad --set values etc.).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out;
  // Flag name -> (config key, value) filled by the option callbacks.
  std::vector<std::pair<std::string, std::string>> flags;
};

void add_common(CLI::App *sub, Common &c) {
  sub->add_option("--config", c.config_file, "key=value configuration file");
  sub->add_option("--set", c.sets, "override one key (key=value); repeatable");
  sub->add_option_function<std::string>(
      "--seed", [&c](const std::string &v) { c.flags.emplace_back("run.seed", v); },
      "master seed");
  sub->add_option_function<std::string>(
      "--jobs", [&c](const std::string &v) { c.flags.emplace_back("run.jobs", v); },
      "worker threads");
  sub->add_option("--out", c.out, "output directory (default: $EDA_DIAR_RUNDIR/<command>)");
}

void add_flag_key(CLI::App *sub, Common &c, const std::string &flag, const std::string &key,
                  const std::string &help) {
  sub->add_option_function<std::string>(
      flag, [&c, key](const std::string &v) { c.flags.emplace_back(key, v); }, help);
}

config::RunConfig resolve_config(const Common &c) {
  config::RunConfig rc;
  try {
    if (!c.config_file.empty()) rc.load_file(c.config_file);
    for (const std::string &kv : c.sets) rc.set_assignment(kv, config::Provenance::kFlag);
    for (const auto &[k, v] : c.flags) rc.set(k, v, config::Provenance::kFlag);
    // Validate every derived structure up front.
    (void)rc.frontend();
    (void)rc.model();
    (void)rc.train();
    (void)rc.infer();
    (void)rc.score();
    (void)rc.corpus();
  } catch (const ConfigInvalid &e) {
    throw UsageError(e.what());
  } catch (const ParseError &e) {
    throw UsageError(c.config_file + ":" + std::to_string(e.line()) + ": " + e.what());
  }
  return rc;
}

std::string run_dir(const Common &c, const std::string &command) {
  std::string dir = c.out;
  if (dir.empty()) {
    const char *root = std::getenv("EDA_DIAR_RUNDIR");
    dir = (fs::path(root && *root ? root : "runs") / command).string();
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir + ": " + ec.message());
  return dir;
}

void write_snapshot(const std::string &dir, const config::RunConfig &rc,
                    const std::string &command, const std::vector<std::string> &inputs) {
  std::ofstream out(fs::path(dir) / "config.snapshot");
  if (!out) throw IoError("cannot write config snapshot in " + dir);
  out << "# eda-diar " << command << '\n';
  for (const std::string &in : inputs) out << "# input " << in << '\n';
  out << rc.snapshot();
}

std::string record_id(const std::string &path) { return fs::path(path).stem().string(); }

}  // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"eda-diar: end-to-end neural speaker diarization with encoder-decoder attractors"};
  app.require_subcommand(1);
  app.footer(config::schema_help());

  Common c;

  // simulate
  CLI::App *sim_cmd = app.add_subcommand("simulate", "generate a labelled synthetic corpus");
  add_common(sim_cmd, c);
  add_flag_key(sim_cmd, c, "--n", "sim.n_mixtures", "number of mixtures");

  // featurize
  std::vector<std::string> wavs;
  CLI::App *feat_cmd = app.add_subcommand("featurize", "WAV files -> feature files");
  add_common(feat_cmd, c);
  feat_cmd->add_option("wav", wavs, "input WAV files")->required();

  // train / finetune
  std::string manifest, resume, checkpoint;
  CLI::App *train_cmd = app.add_subcommand("train", "train a model on a corpus manifest");
  add_common(train_cmd, c);
  train_cmd->add_option("--manifest", manifest, "corpus manifest.jsonl")->required();
  train_cmd->add_option("--resume", resume, "continue from a checkpoint");
  CLI::App *ft_cmd = app.add_subcommand("finetune", "continue training on another corpus");
  add_common(ft_cmd, c);
  ft_cmd->add_option("--manifest", manifest, "corpus manifest.jsonl")->required();
  ft_cmd->add_option("--checkpoint", checkpoint, "starting checkpoint")->required();
  for (CLI::App *a : {train_cmd, ft_cmd}) {
    add_flag_key(a, c, "--alpha", "train.alpha", "existence loss weight");
    add_flag_key(a, c, "--order", "train.order", "chronological | shuffled");
    add_flag_key(a, c, "--epochs", "train.epochs", "epochs");
  }

  // infer / viz
  std::vector<std::string> feature_files;
  std::string csv_path;
  CLI::App *infer_cmd = app.add_subcommand("infer", "diarize feature files or a manifest");
  add_common(infer_cmd, c);
  infer_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  auto *mopt = infer_cmd->add_option("--manifest", manifest, "corpus manifest (scored when it has references)");
  infer_cmd->add_option("--features", feature_files, "feature files")->excludes(mopt);
  CLI::App *viz_cmd = app.add_subcommand("viz", "2-D PCA of embeddings and attractors as CSV");
  add_common(viz_cmd, c);
  viz_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  viz_cmd->add_option("--features", feature_files, "one feature file")->required()->expected(1);
  viz_cmd->add_option("--csv", csv_path, "output CSV (default <out>/projection.csv)");
  for (CLI::App *a : {infer_cmd, viz_cmd}) {
    add_flag_key(a, c, "--tau", "infer.tau", "existence threshold");
    add_flag_key(a, c, "--order", "infer.order", "chronological | shuffled");
    add_flag_key(a, c, "--probe", "infer.probe", "none | subsample:N | last:N");
    add_flag_key(a, c, "--oracle-speakers", "infer.oracle_speakers", "N, 'ref' or 'none'");
  }
  add_flag_key(infer_cmd, c, "--collar", "score.collar_s", "collar in seconds");
  infer_cmd->add_flag_callback("--jer", [&c] { c.flags.emplace_back("score.jer", "true"); },
                               "also report JER");

  // score
  std::string ref_path, hyp_path;
  bool csv = false;
  CLI::App *score_cmd = app.add_subcommand("score", "DER (and JER) of a hypothesis RTTM");
  score_cmd->add_option("--config", c.config_file, "key=value configuration file");
  score_cmd->add_option("--set", c.sets, "override one key (key=value); repeatable");
  score_cmd->add_option("--ref", ref_path, "reference RTTM")->required();
  score_cmd->add_option("--hyp", hyp_path, "hypothesis RTTM")->required();
  add_flag_key(score_cmd, c, "--collar", "score.collar_s", "collar in seconds");
  score_cmd->add_flag_callback("--jer", [&c] { c.flags.emplace_back("score.jer", "true"); },
                               "also report JER");
  score_cmd->add_flag("--csv", csv, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const config::RunConfig rc = resolve_config(c);

    if (sim_cmd->parsed()) {
      const std::string dir = run_dir(c, "simulate");
      write_snapshot(dir, rc, "simulate", {});
      sim::CorpusOptions opts = rc.corpus();
      opts.out_dir = dir;
      const auto recs = sim::make_corpus(opts);
      out << "wrote " << recs.size() << " mixtures to " << dir << "/manifest.jsonl\n";
      return kExitOk;
    }

    if (feat_cmd->parsed()) {
      const std::string dir = run_dir(c, "featurize");
      write_snapshot(dir, rc, "featurize", wavs);
      const feat::FrontendConfig fe = rc.frontend();
      for (const std::string &w : wavs) {
        const feat::FeatureSequence fs_ = feat::featurize(feat::read_wav(w), fe);
        const std::string dst = (fs::path(dir) / (record_id(w) + ".feat")).string();
        feat::write_features(dst, fs_);
        out << dst << ' ' << fs_.num_frames() << 'x' << fs_.dim() << '\n';
      }
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      const std::string dir = run_dir(c, "train");
      write_snapshot(dir, rc, "train", {manifest});
      train::TrainConfig tc = rc.train();
      tc.out_dir = dir;
      std::optional<std::string> from;
      if (!resume.empty()) from = resume;
      const auto res = train::train(manifest, rc.model(), tc, rc.seed(), from);
      if (!res.metrics.empty())
        out << "final " << train::to_json_line(res.metrics.back()) << '\n';
      out << "checkpoint " << res.checkpoint << '\n';
      return kExitOk;
    }

    if (ft_cmd->parsed()) {
      const std::string dir = run_dir(c, "finetune");
      write_snapshot(dir, rc, "finetune", {checkpoint, manifest});
      train::TrainConfig tc = rc.train();
      tc.out_dir = dir;
      // Architecture keys left at their defaults are taken from the checkpoint.
      std::optional<model::ModelConfig> expected;
      bool explicit_model = false;
      for (const auto &k : config::schema())
        if (k.key.rfind("model.", 0) == 0 && rc.provenance(k.key) != config::Provenance::kDefault)
          explicit_model = true;
      if (explicit_model) expected = rc.model();
      const auto res = train::finetune(checkpoint, manifest, tc, expected);
      if (!res.metrics.empty())
        out << "final " << train::to_json_line(res.metrics.back()) << '\n';
      out << "checkpoint " << res.checkpoint << '\n';
      return kExitOk;
    }

    if (infer_cmd->parsed()) {
      const std::string dir = run_dir(c, "infer");
      std::vector<std::string> inputs{checkpoint};
      if (!manifest.empty()) inputs.push_back(manifest);
      inputs.insert(inputs.end(), feature_files.begin(), feature_files.end());
      write_snapshot(dir, rc, "infer", inputs);
      model::EendEda<float> m = model::load_model(checkpoint);
      const infer::InferConfig ic = rc.infer();
      const bool oracle_ref = rc.is_literal("infer.oracle_speakers", "ref");
      std::ofstream counts(fs::path(dir) / "counts.tsv");
      counts << "recording\testimated\tused\n";
      if (!manifest.empty()) {
        const auto ev = infer::evaluate_manifest(m, manifest, ic, oracle_ref, rc.score(),
                                                 rc.get_bool("score.jer"), rc.jobs());
        score::write_rttm((fs::path(dir) / "hyp.rttm").string(), ev.hypothesis);
        const auto recs = sim::read_manifest(manifest);
        for (std::size_t i = 0; i < recs.size(); ++i)
          counts << recs[i].id << '\t' << ev.estimated_counts[i] << '\t'
                 << (oracle_ref ? ev.reference_counts[i]
                                : ic.oracle_speakers.value_or(ev.estimated_counts[i]))
                 << '\n';
        out << score::format_report(ev.report);
        out << "speaker-count accuracy " << 100.0 * ev.count_accuracy << "%\n";
      } else {
        if (feature_files.empty()) throw UsageError("infer needs --manifest or --features");
        if (oracle_ref) throw UsageError("--oracle-speakers ref needs --manifest");
        std::vector<score::RttmSegment> all;
        for (const std::string &f : feature_files) {
          const feat::FeatureSequence x = feat::read_features(f);
          const auto r = infer::diarize(m, x.frames, ic, record_id(f), x.frame_period_s);
          all.insert(all.end(), r.output.segments.begin(), r.output.segments.end());
          counts << record_id(f) << '\t' << r.estimated_speakers << '\t' << r.used_speakers << '\n';
          out << record_id(f) << ": " << r.used_speakers << " speakers\n";
        }
        score::write_rttm((fs::path(dir) / "hyp.rttm").string(), all);
      }
      out << "rttm " << (fs::path(dir) / "hyp.rttm").string() << '\n';
      return kExitOk;
    }

    if (viz_cmd->parsed()) {
      const std::string dir = run_dir(c, "viz");
      write_snapshot(dir, rc, "viz", {checkpoint, feature_files.front()});
      model::EendEda<float> m = model::load_model(checkpoint);
      infer::InferConfig ic = rc.infer();
      const feat::FeatureSequence x = feat::read_features(feature_files.front());
      const auto r = infer::diarize(m, x.frames, ic, record_id(feature_files.front()), x.frame_period_s);
      std::vector<bool> silence(static_cast<std::size_t>(r.embeddings.rows()), true);
      for (ad::Index t = 0; t < r.output.labels.activity.rows(); ++t)
        silence[static_cast<std::size_t>(t)] = r.output.labels.activity.row(t).sum() == 0.0f;
      const infer::Projection p =
          infer::project2d(r.embeddings, r.attractors.topRows(r.used_speakers));
      const std::string path = csv_path.empty() ? (fs::path(dir) / "projection.csv").string() : csv_path;
      infer::write_projection_csv(path, p, silence);
      out << "projection " << path << '\n';
      return kExitOk;
    }

    if (score_cmd->parsed()) {
      const auto ref = score::read_rttm(ref_path);
      const auto hyp = score::read_rttm(hyp_path);
      score::ScoreReport r = score::der(ref, hyp, rc.score());
      if (rc.get_bool("score.jer")) r.jer = score::jer(ref, hyp);
      out << (csv ? score::format_report_csv(r) : score::format_report(r));
      return kExitOk;
    }
  } catch (const UsageError &e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UndefinedDER &e) {
    err << "DER undefined: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace eda::cli
