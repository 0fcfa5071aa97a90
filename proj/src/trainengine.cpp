// src/trainengine.cpp

#include "eda/trainengine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "eda/errors.hpp"
#include "eda/featfront.hpp"
#include "eda/mixsim.hpp"

namespace eda::train {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigInvalid("epochs must be >= 0");
  if (batch_size < 1) throw ConfigInvalid("batch_size must be >= 1");
  if (chunk_len_frames < 1) throw ConfigInvalid("chunk_len_frames must be >= 1");
  if (!(alpha >= 0.0)) throw ConfigInvalid("alpha must be >= 0");
  if (warmup_steps < 1) throw ConfigInvalid("warmup_steps must be >= 1");
  if (!(base_lr > 0.0)) throw ConfigInvalid("base_lr must be > 0");
  if (max_speakers < 1) throw ConfigInvalid("max_speakers must be >= 1");
}

namespace {

std::string resolve(const fs::path &dir, const std::string &p) {
  if (p.empty()) return p;
  const fs::path q(p);
  return q.is_absolute() ? p : (dir / q).string();
}

void append_chunks(const std::string &id, const feat::FloatMatrix &x,
                   const ad::Matrix<float> &y, int chunk, int max_speakers,
                   std::vector<Sample> &out) {
  const ad::Index T = std::min(x.rows(), y.rows());
  for (ad::Index start = 0; start < T; start += chunk) {
    const ad::Index len = std::min<ad::Index>(chunk, T - start);
    if (start > 0 && 2 * len < chunk) break;
    Sample s;
    s.id = id + "@" + std::to_string(start);
    s.features = x.middleRows(start, len);
    const ad::Matrix<float> yc = y.middleRows(start, len);
    std::vector<std::pair<float, ad::Index>> act;
    for (ad::Index j = 0; j < yc.cols(); ++j) {
      const float a = yc.col(j).sum();
      if (a > 0.0f) act.emplace_back(a, j);
    }
    // Most active first, then original order, for the cap.
    std::stable_sort(act.begin(), act.end(),
                     [](const auto &a, const auto &b) { return a.first > b.first; });
    if (static_cast<int>(act.size()) > max_speakers) act.resize(static_cast<std::size_t>(max_speakers));
    std::sort(act.begin(), act.end(), [](const auto &a, const auto &b) { return a.second < b.second; });
    s.labels.resize(len, static_cast<ad::Index>(act.size()));
    for (std::size_t k = 0; k < act.size(); ++k)
      s.labels.col(static_cast<ad::Index>(k)) = yc.col(act[k].second);
    out.push_back(std::move(s));
  }
}

char *fmt(char *buf, std::size_t n, double v) {
  std::snprintf(buf, n, "%.9g", v);
  return buf;
}

void check_feature_dim(const model::ModelConfig &mc, const std::vector<Sample> &data) {
  for (const Sample &s : data)
    if (s.features.cols() != mc.encoder.input_dim)
      throw CheckpointIncompatible("corpus feature dim " + std::to_string(s.features.cols()) +
                                   " does not match model input_dim " +
                                   std::to_string(mc.encoder.input_dim));
}

ad::AdamConfig adam_config(const TrainConfig &cfg, const model::ModelConfig &mc) {
  ad::AdamConfig a;
  a.base_lr = cfg.base_lr;
  a.warmup_steps = cfg.warmup_steps;
  a.d_model = mc.encoder.d_model;
  return a;
}

}  // namespace

std::vector<Sample> load_corpus(const std::string &manifest_path, int chunk_len_frames,
                                int max_speakers) {
  if (chunk_len_frames < 1) throw ConfigInvalid("chunk_len_frames must be >= 1");
  const std::vector<sim::ManifestRecord> recs = sim::read_manifest(manifest_path);
  if (recs.empty()) throw IoError("manifest " + manifest_path + " lists no recordings");
  const fs::path dir = fs::path(manifest_path).parent_path();
  std::vector<Sample> out;
  for (const sim::ManifestRecord &r : recs) {
    if (r.features.empty()) throw IoError(r.id + ": manifest record has no features");
    const feat::FeatureSequence f = feat::read_features(resolve(dir, r.features));
    const sim::LabelMatrix l = sim::read_labels(resolve(dir, r.labels));
    append_chunks(r.id, f.frames, l.activity, chunk_len_frames, max_speakers, out);
  }
  return out;
}

std::string to_json_line(const StepMetrics &m) {
  char a[32], b[32], c[32], d[32], e[32];
  char line[256];
  std::snprintf(line, sizeof line,
                "{\"step\":%lld,\"epoch\":%d,\"l_d\":%s,\"l_a\":%s,\"total\":%s,\"lr\":%s,\"grad_norm\":%s}",
                static_cast<long long>(m.step), m.epoch, fmt(a, sizeof a, m.l_d),
                fmt(b, sizeof b, m.l_a), fmt(c, sizeof c, m.total), fmt(d, sizeof d, m.lr),
                fmt(e, sizeof e, m.grad_norm));
  return line;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  // splitmix64 over a combined key.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (epoch + 1) + 0xbf58476d1ce4e5b9ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Trainer::Trainer(model::EendEda<float> m, TrainConfig cfg)
    : model_(std::move(m)),
      cfg_(std::move(cfg)),
      adam_(adam_config(cfg_, model_.config()), model_.parameters()) {
  cfg_.validate();
}

void Trainer::set_config(TrainConfig cfg) {
  cfg.validate();
  cfg_ = std::move(cfg);
  adam_.set_config(adam_config(cfg_, model_.config()));
}

Trainer Trainer::from_checkpoint(const std::string &path, TrainConfig cfg) {
  const io::Archive a = io::read_archive(path);
  model::EendEda<float> m(model::ModelConfig::from_meta(a.meta), 0);
  m.import_tensors(a);
  Trainer tr(std::move(m), std::move(cfg));
  auto &st = tr.adam_.state();
  const auto params = tr.model_.parameters();
  const bool has_moments = a.meta.count("train.step") > 0;
  if (has_moments) {
    st.step = std::stoll(a.meta_at("train.step"));
    tr.completed_epochs_ = std::stoi(a.meta_at("train.epoch"));
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (int which = 0; which < 2; ++which) {
        const std::string name = (which ? "adam/v/" : "adam/m/") + params[k]->name;
        const io::Tensor *t = a.find(name);
        if (!t) throw CheckpointIncompatible(path + ": missing optimizer tensor " + name);
        auto &dst = which ? st.second_moment[k] : st.first_moment[k];
        if (t->numel() != static_cast<std::uint64_t>(dst.size()))
          throw CheckpointIncompatible(path + ": optimizer tensor shape mismatch for " + name);
        std::copy(t->data.begin(), t->data.end(), dst.data());
      }
    }
  }
  return tr;
}

void Trainer::save_checkpoint(const std::string &path) const {
  io::Archive a;
  for (const auto &[k, v] : model_.config().to_meta()) a.meta[k] = v;
  a.meta["kind"] = "eend-eda-model";
  a.meta["config_hash"] = std::to_string(model_.config().hash());
  a.meta["train.step"] = std::to_string(adam_.state().step);
  a.meta["train.epoch"] = std::to_string(completed_epochs_);
  a.meta["train.seed"] = std::to_string(cfg_.seed);
  model_.export_tensors(a);
  const auto params = model_.parameters();
  const auto &st = adam_.state();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (int which = 0; which < 2; ++which) {
      const auto &src = which ? st.second_moment[k] : st.first_moment[k];
      io::Tensor t;
      t.dims = {static_cast<std::uint64_t>(src.rows()), static_cast<std::uint64_t>(src.cols())};
      t.data.assign(src.data(), src.data() + src.size());
      a.tensors.emplace_back((which ? "adam/v/" : "adam/m/") + params[k]->name, std::move(t));
    }
  }
  io::write_archive(path, a);
}

objective::TrainingLoss<float> Trainer::sample_loss(ad::Tape<float> &tape, const Sample &s,
                                                    std::uint64_t order_seed) {
  auto E = model_.encode(tape, s.features);
  std::vector<ad::Index> order;
  if (cfg_.order == model::OrderMode::kShuffled) order = model::shuffled_order(E.rows(), order_seed);
  const int S = static_cast<int>(s.labels.cols());
  model_.note_trained_speakers(S);
  auto out = model_.eda(tape, E, order, S + 1);
  ad::Var<float> logits;
  if (S > 0)
    logits = model::EendEda<float>::posterior_logits(E, ad::slice_rows(out.attractors, 0, S));
  objective::PitOptions po;
  po.use_hungarian = cfg_.use_hungarian;
  return objective::eda_loss<float>(logits, out.existence_logits, s.labels, cfg_.alpha, po);
}

StepMetrics Trainer::step(const std::vector<const Sample *> &batch, int epoch) {
  if (batch.empty()) throw ConfigInvalid("empty batch");
  adam_.zero_grad();
  StepMetrics m;
  m.epoch = epoch;
  const float inv_b = 1.0f / static_cast<float>(batch.size());
  const std::int64_t next_step = adam_.state().step + 1;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ad::Tape<float> tape;
    const auto loss = sample_loss(
        tape, *batch[i], derive_seed(cfg_.seed, static_cast<std::uint64_t>(next_step), i));
    const double total = static_cast<double>(loss.total.value()(0, 0));
    if (!std::isfinite(total))
      throw DivergenceError("non-finite loss at step " + std::to_string(next_step) +
                            " (sample " + batch[i]->id + ", l_d=" + std::to_string(loss.l_d) +
                            ", l_a=" + std::to_string(loss.l_a) + ")");
    tape.backward(ad::scale(loss.total, inv_b));
    m.l_d += loss.l_d / static_cast<double>(batch.size());
    m.l_a += loss.l_a / static_cast<double>(batch.size());
    m.total += total / static_cast<double>(batch.size());
  }
  const auto params = model_.parameters();
  m.grad_norm = cfg_.clip_norm > 0.0 ? ad::clip_grad_norm(params, cfg_.clip_norm)
                                     : ad::clip_grad_norm(params, HUGE_VAL);
  if (!std::isfinite(m.grad_norm))
    throw DivergenceError("non-finite gradient norm at step " + std::to_string(next_step));
  m.lr = adam_.step();
  m.step = adam_.state().step;
  return m;
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t n, int epoch) const {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(cfg_.seed, static_cast<std::uint64_t>(epoch), ~0ULL));
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  return idx;
}

void Trainer::run(const std::vector<Sample> &data, const StepHook &hook) {
  if (data.empty()) throw IoError("no training samples");
  check_feature_dim(model_.config(), data);
  std::ofstream metrics;
  if (!cfg_.out_dir.empty()) {
    fs::create_directories(cfg_.out_dir);
    metrics.open((fs::path(cfg_.out_dir) / "metrics.jsonl").string(), std::ios::app);
    if (!metrics) throw IoError("cannot open metrics log in " + cfg_.out_dir);
  }
  const std::size_t B = static_cast<std::size_t>(cfg_.batch_size);
  for (int epoch = completed_epochs_; epoch < cfg_.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(data.size(), epoch);
    for (std::size_t b = 0; b < order.size(); b += B) {
      std::vector<const Sample *> batch;
      for (std::size_t k = b; k < std::min(order.size(), b + B); ++k) batch.push_back(&data[order[k]]);
      const StepMetrics m = step(batch, epoch);
      if (metrics.is_open()) metrics << to_json_line(m) << '\n' << std::flush;
      if (hook) hook(m);
    }
    completed_epochs_ = epoch + 1;
    if (!cfg_.out_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof name, "epoch%03d.ckpt", completed_epochs_);
      save_checkpoint((fs::path(cfg_.out_dir) / name).string());
      save_checkpoint((fs::path(cfg_.out_dir) / "last.ckpt").string());
    }
  }
}

TrainResult train(const std::string &manifest_path, const model::ModelConfig &mcfg,
                  const TrainConfig &cfg, std::uint64_t init_seed,
                  const std::optional<std::string> &resume_from) {
  cfg.validate();
  mcfg.validate();
  const std::vector<Sample> data = load_corpus(manifest_path, cfg.chunk_len_frames, cfg.max_speakers);
  Trainer tr = resume_from ? Trainer::from_checkpoint(*resume_from, cfg)
                           : Trainer(model::EendEda<float>(mcfg, init_seed), cfg);
  if (resume_from && !(tr.model().config() == mcfg))
    throw CheckpointIncompatible("checkpoint model config differs from the requested one");
  TrainResult res;
  tr.run(data, [&](const StepMetrics &m) { res.metrics.push_back(m); });
  res.epochs_completed = tr.completed_epochs();
  if (!cfg.out_dir.empty()) {
    res.checkpoint = (fs::path(cfg.out_dir) / "last.ckpt").string();
    if (!fs::exists(res.checkpoint)) tr.save_checkpoint(res.checkpoint);
  }
  return res;
}

TrainResult finetune(const std::string &checkpoint, const std::string &manifest_path,
                     const TrainConfig &cfg, const std::optional<model::ModelConfig> &expected) {
  cfg.validate();
  Trainer tr = Trainer::from_checkpoint(checkpoint, cfg);
  if (expected && !(tr.model().config() == *expected))
    throw CheckpointIncompatible("checkpoint model config (" + tr.model().config().canonical() +
                                 ") differs from the requested one (" + expected->canonical() + ")");
  TrainResult res;
  if (cfg.epochs == 0) {
    if (!cfg.out_dir.empty()) {
      fs::create_directories(cfg.out_dir);
      res.checkpoint = (fs::path(cfg.out_dir) / "last.ckpt").string();
      fs::copy_file(checkpoint, res.checkpoint, fs::copy_options::overwrite_existing);
    }
    return res;
  }
  const std::vector<Sample> data = load_corpus(manifest_path, cfg.chunk_len_frames, cfg.max_speakers);
  check_feature_dim(tr.model().config(), data);
  // Epochs restart for the new corpus; optimizer step and moments carry on.
  tr.restart_epochs();
  tr.run(data, [&](const StepMetrics &m) { res.metrics.push_back(m); });
  res.epochs_completed = tr.completed_epochs();
  if (!cfg.out_dir.empty()) res.checkpoint = (fs::path(cfg.out_dir) / "last.ckpt").string();
  return res;
}

}  // namespace eda::train
