// src/config.cpp

#include "eda/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "eda/errors.hpp"

namespace eda::config {

namespace {

using VT = ValueType;

std::vector<KeySpec> build_schema() {
  const std::vector<std::string> kPreset{"preset"};
  std::vector<KeySpec> s = {
      {"run.seed", VT::kUint, "0", "master seed for simulation, initialisation, shuffles"},
      {"run.jobs", VT::kInt, "1", "worker threads for simulation and inference (training is serial)"},

      {"frontend.sample_rate_hz", VT::kInt, "8000", "expected input sample rate"},
      {"frontend.window_s", VT::kReal, "0.025", "analysis window length"},
      {"frontend.hop_s", VT::kReal, "0.01", "analysis hop"},
      {"frontend.n_fft", VT::kInt, "0", "FFT size (0: next power of two >= window)"},
      {"frontend.n_mels", VT::kInt, "23", "Mel bins per frame"},
      {"frontend.power_floor", VT::kReal, "1e-10", "added to Mel power before the log"},
      {"frontend.context", VT::kInt, "7", "spliced frames on each side"},
      {"frontend.subsample", VT::kInt, "10", "keep every n-th spliced frame"},

      {"sim.n_mixtures", VT::kInt, "100", "mixtures per corpus"},
      {"sim.min_speakers", VT::kInt, "1", "smallest speaker count drawn per mixture"},
      {"sim.max_speakers", VT::kInt, "4", "largest speaker count drawn per mixture"},
      {"sim.duration_s", VT::kReal, "60", "mixture length in seconds"},
      {"sim.overlap_ratio", VT::kReal, "preset",
       "target overlap ratio; 'preset' uses 0 / .341 / .342 / .315 for 1-4 speakers",
       {}, kPreset},
      {"sim.silence_gap_mean_s", VT::kReal, "1.0", "mean of the exponential silence gap"},
      {"sim.noise_snr_db", VT::kReal, "30", "white background noise SNR, or 'none'", {}, {"none"}},
      {"sim.utterance_median_s", VT::kReal, "2.5", "median utterance length"},
      {"sim.utterance_sigma", VT::kReal, "0.4", "std. dev. of log utterance length"},
      {"sim.pool_size", VT::kInt, "16", "fixed speaker pool size (0: fresh speakers per mixture)"},
      {"sim.pool_seed", VT::kUint, "0", "seed of the speaker pool"},
      {"sim.write_wav", VT::kBool, "false", "also write waveforms"},
      {"sim.prefix", VT::kString, "mix", "recording id prefix"},

      {"model.preset", VT::kChoice, "full", "base architecture: full (4x256) or toy (2x64)", {"full", "toy"}},
      {"model.n_blocks", VT::kInt, "preset", "encoder blocks", {}, kPreset},
      {"model.d_model", VT::kInt, "preset", "embedding width D", {}, kPreset},
      {"model.n_heads", VT::kInt, "preset", "attention heads", {}, kPreset},
      {"model.d_ff", VT::kInt, "preset", "feed-forward width", {}, kPreset},
      {"model.input_dim", VT::kInt, "preset", "feature dimension", {}, kPreset},
      {"model.positional_encoding", VT::kBool, "false", "add sinusoidal positions to the encoder input"},
      {"model.eda_layers", VT::kInt, "1", "LSTM layers in the attractor encoder and decoder"},

      {"train.epochs", VT::kInt, "10", "passes over the corpus"},
      {"train.batch_size", VT::kInt, "8", "chunks per optimizer step"},
      {"train.chunk_len_frames", VT::kInt, "500", "frames per training chunk"},
      {"train.alpha", VT::kReal, "1.0", "weight of the attractor existence loss"},
      {"train.order", VT::kChoice, "shuffled", "embedding order fed to the attractor encoder",
       {"chronological", "shuffled"}},
      {"train.warmup_steps", VT::kInt, "4000", "learning-rate warm-up steps (100000 at full scale)"},
      {"train.base_lr", VT::kReal, "1.0", "multiplier of the warm-up schedule"},
      {"train.clip_norm", VT::kReal, "5.0", "gradient norm clip (<= 0 disables)"},
      {"train.max_speakers", VT::kInt, "8", "most active speakers kept per chunk"},
      {"train.hungarian", VT::kBool, "false", "assignment solver instead of exhaustive permutations"},

      {"infer.tau", VT::kReal, "0.5", "existence threshold for counting speakers"},
      {"infer.activity_threshold", VT::kReal, "0.5", "posterior threshold for speech activity"},
      {"infer.median_filter_frames", VT::kInt, "11", "median filter length (odd)"},
      {"infer.order", VT::kChoice, "shuffled", "embedding order fed to the attractor encoder",
       {"chronological", "shuffled"}},
      {"infer.probe", VT::kString, "none", "attractor input probe: none | subsample:N | last:N"},
      {"infer.oracle_speakers", VT::kInt, "none",
       "fixed speaker count, 'ref' (count from the manifest) or 'none'", {}, {"none", "ref"}},
      {"infer.max_attractors", VT::kInt, "auto",
       "attractors decoded per recording; 'auto' is the largest trained speaker count + 1",
       {}, {"auto"}},

      {"score.collar_s", VT::kReal, "0.25", "no-score collar around reference boundaries"},
      {"score.score_overlap", VT::kBool, "true", "score overlapped speech"},
      {"score.jer", VT::kBool, "false", "also report the Jaccard error rate"},
  };
  std::sort(s.begin(), s.end(), [](const KeySpec &a, const KeySpec &b) { return a.key < b.key; });
  return s;
}

bool parse_bool(const std::string &v, bool &out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") { out = true; return true; }
  if (v == "false" || v == "0" || v == "no" || v == "off") { out = false; return true; }
  return false;
}

template <typename T>
bool parse_number(const std::string &v, T &out) {
  if (v.empty()) return false;
  const char *b = v.data(), *e = v.data() + v.size();
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      out = static_cast<T>(std::stod(v, &used));
      return used == v.size();
    } catch (const std::exception &) {
      return false;
    }
  } else {
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
  }
}

void check_value(const KeySpec &k, const std::string &v) {
  if (std::find(k.literals.begin(), k.literals.end(), v) != k.literals.end()) return;
  bool ok = false;
  switch (k.type) {
    case VT::kInt: { std::int64_t x; ok = parse_number(v, x); break; }
    case VT::kUint: { std::uint64_t x; ok = parse_number(v, x); break; }
    case VT::kReal: { double x; ok = parse_number(v, x); break; }
    case VT::kBool: { bool x; ok = parse_bool(v, x); break; }
    case VT::kString: ok = v.find_first_of(" \t\n") == std::string::npos; break;
    case VT::kChoice: ok = std::find(k.choices.begin(), k.choices.end(), v) != k.choices.end(); break;
  }
  if (!ok) throw ConfigInvalid("invalid value '" + v + "' for " + k.key);
}

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const char *type_name(const KeySpec &k) {
  switch (k.type) {
    case VT::kInt: return "int";
    case VT::kUint: return "uint";
    case VT::kReal: return "real";
    case VT::kBool: return "bool";
    case VT::kString: return "string";
    case VT::kChoice: return "choice";
  }
  return "?";
}

}  // namespace

const std::vector<KeySpec> &schema() {
  static const std::vector<KeySpec> s = build_schema();
  return s;
}

const KeySpec *find_key(const std::string &key) {
  for (const KeySpec &k : schema())
    if (k.key == key) return &k;
  return nullptr;
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kDefault: return "default";
    case Provenance::kFile: return "file";
    case Provenance::kFlag: return "flag";
  }
  return "default";
}

RunConfig::RunConfig() {
  for (const KeySpec &k : schema()) values_[k.key] = {k.default_value, Provenance::kDefault};
}

void RunConfig::set(const std::string &key, const std::string &value, Provenance from) {
  const KeySpec *k = find_key(key);
  if (!k) throw ConfigInvalid("unknown configuration key '" + key + "'");
  check_value(*k, value);
  values_[key] = {value, from};
}

void RunConfig::set_assignment(const std::string &kv, Provenance from) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigInvalid("expected key=value, got '" + kv + "'");
  set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), from);
}

void RunConfig::load_text(const std::string &text) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(n, "expected key = value");
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), Provenance::kFile);
    } catch (const ConfigInvalid &e) {
      throw ParseError(n, e.what());
    }
  }
}

void RunConfig::load_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str());
}

const std::string &RunConfig::get(const std::string &key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigInvalid("unknown configuration key '" + key + "'");
  return it->second.value;
}

std::int64_t RunConfig::get_int(const std::string &key) const {
  std::int64_t x = 0;
  if (!parse_number(get(key), x)) throw ConfigInvalid(key + " is not an integer: " + get(key));
  return x;
}

std::uint64_t RunConfig::get_uint(const std::string &key) const {
  std::uint64_t x = 0;
  if (!parse_number(get(key), x)) throw ConfigInvalid(key + " is not an unsigned integer: " + get(key));
  return x;
}

double RunConfig::get_real(const std::string &key) const {
  double x = 0;
  if (!parse_number(get(key), x)) throw ConfigInvalid(key + " is not a number: " + get(key));
  return x;
}

bool RunConfig::get_bool(const std::string &key) const {
  bool b = false;
  if (!parse_bool(get(key), b)) throw ConfigInvalid(key + " is not a boolean: " + get(key));
  return b;
}

bool RunConfig::is_literal(const std::string &key, const std::string &lit) const {
  return get(key) == lit;
}

Provenance RunConfig::provenance(const std::string &key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigInvalid("unknown configuration key '" + key + "'");
  return it->second.from;
}

std::string RunConfig::snapshot() const {
  std::ostringstream os;
  for (const auto &[k, e] : values_) os << k << " = " << e.value << "  # " << to_string(e.from) << '\n';
  return os.str();
}

feat::FrontendConfig RunConfig::frontend() const {
  feat::FrontendConfig f;
  f.sample_rate_hz = static_cast<int>(get_int("frontend.sample_rate_hz"));
  f.window_s = get_real("frontend.window_s");
  f.hop_s = get_real("frontend.hop_s");
  f.n_fft = static_cast<int>(get_int("frontend.n_fft"));
  f.n_mels = static_cast<int>(get_int("frontend.n_mels"));
  f.power_floor = get_real("frontend.power_floor");
  f.context = static_cast<int>(get_int("frontend.context"));
  f.subsample = static_cast<int>(get_int("frontend.subsample"));
  f.validate();
  return f;
}

sim::CorpusOptions RunConfig::corpus() const {
  sim::CorpusOptions c;
  c.n_mixtures = static_cast<int>(get_int("sim.n_mixtures"));
  c.min_speakers = static_cast<int>(get_int("sim.min_speakers"));
  c.max_speakers = static_cast<int>(get_int("sim.max_speakers"));
  c.seed = seed();
  c.prefix = get("sim.prefix");
  c.write_wav = get_bool("sim.write_wav");
  c.frontend = frontend();
  c.jobs = jobs();
  c.overlap_preset = is_literal("sim.overlap_ratio", "preset");
  if (!c.overlap_preset) c.spec.target_overlap_ratio = get_real("sim.overlap_ratio");
  c.spec.duration_s = get_real("sim.duration_s");
  c.spec.silence_gap_mean_s = get_real("sim.silence_gap_mean_s");
  if (is_literal("sim.noise_snr_db", "none"))
    c.spec.noise_snr_db.reset();
  else
    c.spec.noise_snr_db = get_real("sim.noise_snr_db");
  c.spec.utterance_median_s = get_real("sim.utterance_median_s");
  c.spec.utterance_sigma = get_real("sim.utterance_sigma");
  c.spec.speaker_pool_size = static_cast<int>(get_int("sim.pool_size"));
  c.spec.pool_seed = get_uint("sim.pool_seed");
  return c;
}

model::ModelConfig RunConfig::model() const {
  model::ModelConfig m =
      get("model.preset") == "toy" ? model::ModelConfig::toy() : model::ModelConfig::full();
  auto take = [&](const char *key, int &dst) {
    if (!is_literal(key, "preset")) dst = static_cast<int>(get_int(key));
  };
  take("model.n_blocks", m.encoder.n_blocks);
  take("model.d_model", m.encoder.d_model);
  take("model.n_heads", m.encoder.n_heads);
  take("model.d_ff", m.encoder.d_ff);
  if (is_literal("model.input_dim", "preset"))
    m.encoder.input_dim = frontend().feature_dim();
  else
    m.encoder.input_dim = static_cast<int>(get_int("model.input_dim"));
  m.encoder.positional_encoding = get_bool("model.positional_encoding");
  m.eda.n_layers = static_cast<int>(get_int("model.eda_layers"));
  m.validate();
  return m;
}

train::TrainConfig RunConfig::train() const {
  train::TrainConfig t;
  t.epochs = static_cast<int>(get_int("train.epochs"));
  t.batch_size = static_cast<int>(get_int("train.batch_size"));
  t.chunk_len_frames = static_cast<int>(get_int("train.chunk_len_frames"));
  t.alpha = get_real("train.alpha");
  t.order = model::parse_order_mode(get("train.order"));
  t.seed = seed();
  t.warmup_steps = static_cast<int>(get_int("train.warmup_steps"));
  t.base_lr = get_real("train.base_lr");
  t.clip_norm = get_real("train.clip_norm");
  t.max_speakers = static_cast<int>(get_int("train.max_speakers"));
  t.use_hungarian = get_bool("train.hungarian");
  t.validate();
  return t;
}

infer::InferConfig RunConfig::infer() const {
  infer::InferConfig c;
  c.tau = get_real("infer.tau");
  c.activity_threshold = get_real("infer.activity_threshold");
  c.median_filter_frames = static_cast<int>(get_int("infer.median_filter_frames"));
  c.order = model::parse_order_mode(get("infer.order"));
  c.seed = seed();
  c.probe = infer::Probe::parse(get("infer.probe"));
  if (!is_literal("infer.oracle_speakers", "none") && !is_literal("infer.oracle_speakers", "ref"))
    c.oracle_speakers = static_cast<int>(get_int("infer.oracle_speakers"));
  if (!is_literal("infer.max_attractors", "auto")) {
    c.max_attractors = static_cast<int>(get_int("infer.max_attractors"));
    if (c.max_attractors < 1) throw ConfigInvalid("infer.max_attractors must be >= 1 or 'auto'");
  }
  c.validate();
  return c;
}

score::ScoreOptions RunConfig::score() const {
  score::ScoreOptions s;
  s.collar_s = get_real("score.collar_s");
  if (s.collar_s < 0.0) throw ConfigInvalid("score.collar_s must be >= 0");
  s.score_overlap = get_bool("score.score_overlap");
  return s;
}

std::string schema_help() {
  std::ostringstream os;
  os << "Configuration keys (set with --set key=value or in a --config file):\n";
  for (const KeySpec &k : schema()) {
    os << "  " << k.key << " (" << type_name(k);
    if (!k.choices.empty()) {
      os << ":";
      for (std::size_t i = 0; i < k.choices.size(); ++i) os << (i ? "|" : " ") << k.choices[i];
    }
    os << ", default " << k.default_value << ")\n      " << k.help << '\n';
  }
  return os.str();
}

}  // namespace eda::config
