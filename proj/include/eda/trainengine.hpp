// eda/trainengine.hpp
//
// Training loop: manifest -> fixed-length chunks -> per-sample tape ->
// averaged batch loss -> clipped Adam step with the warm-up schedule.
// A checkpoint (parameters, Adam moments, step, epoch) is written after
// every epoch; metrics go to metrics.jsonl, one line per optimizer step.

#ifndef EDA_TRAINENGINE_HPP_
#define EDA_TRAINENGINE_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "eda/featfront.hpp"
#include "eda/model.hpp"
#include "eda/objective.hpp"
#include "eda/optimizer.hpp"

namespace eda::train {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 8;
  int chunk_len_frames = 500;
  double alpha = objective::kAlphaSimulated;
  model::OrderMode order = model::OrderMode::kShuffled;
  std::uint64_t seed = 0;
  int warmup_steps = 4000;
  double base_lr = 1.0;
  double clip_norm = 5.0;       // <= 0 disables clipping
  int max_speakers = 8;         // most active speakers kept per chunk
  bool use_hungarian = false;
  std::string out_dir;          // checkpoints + metrics; empty keeps nothing

  void validate() const;  // throws ConfigInvalid
};

struct Sample {
  std::string id;
  feat::FloatMatrix features;  // T x F
  ad::Matrix<float> labels;    // T x S, only speakers active in the chunk
};

// Reads features and labels listed in the manifest and cuts them into
// consecutive chunks of chunk_len frames (a shorter tail is kept when it is
// at least half a chunk, or when it is the whole recording).
std::vector<Sample> load_corpus(const std::string &manifest_path,
                                int chunk_len_frames, int max_speakers);

struct StepMetrics {
  std::int64_t step = 0;
  int epoch = 0;
  double l_d = 0.0;
  double l_a = 0.0;
  double total = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

std::string to_json_line(const StepMetrics &m);

// Stateless per-(seed, epoch, index) derivation; used for batch order and
// embedding shuffles so a resumed run replays the same stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

class Trainer {
 public:
  Trainer(model::EendEda<float> m, TrainConfig cfg);
  Trainer(Trainer &&) = default;
  Trainer(const Trainer &) = delete;
  Trainer &operator=(const Trainer &) = delete;

  // Restores parameters, Adam moments and counters from a checkpoint.
  static Trainer from_checkpoint(const std::string &path, TrainConfig cfg);

  // One optimizer step over the batch (loss averaged over samples).
  StepMetrics step(const std::vector<const Sample *> &batch, int epoch);

  // Loss of one sample under the current parameters, no update.
  objective::TrainingLoss<float> sample_loss(ad::Tape<float> &tape, const Sample &s,
                                             std::uint64_t order_seed);

  // Sample order for an epoch.
  std::vector<std::size_t> epoch_order(std::size_t n, int epoch) const;

  // Runs the remaining epochs (completed_epochs .. cfg.epochs-1).
  using StepHook = std::function<void(const StepMetrics &)>;
  void run(const std::vector<Sample> &data, const StepHook &hook = {});

  void save_checkpoint(const std::string &path) const;

  model::EendEda<float> &model() { return model_; }
  const model::EendEda<float> &model() const { return model_; }
  const ad::Adam<float> &optimizer() const { return adam_; }
  int completed_epochs() const { return completed_epochs_; }
  void restart_epochs() { completed_epochs_ = 0; }
  const TrainConfig &config() const { return cfg_; }
  void set_config(TrainConfig cfg);

 private:
  model::EendEda<float> model_;
  TrainConfig cfg_;
  ad::Adam<float> adam_;
  int completed_epochs_ = 0;
};

struct TrainResult {
  std::string checkpoint;  // final checkpoint path (empty if no out_dir)
  std::vector<StepMetrics> metrics;
  int epochs_completed = 0;
};

// Fresh model from init_seed; resumes instead when resume_from is given.
TrainResult train(const std::string &manifest_path, const model::ModelConfig &mcfg,
                  const TrainConfig &cfg, std::uint64_t init_seed,
                  const std::optional<std::string> &resume_from = std::nullopt);

// Continues from a checkpoint on a new corpus. The checkpoint's model
// config must equal `expected` when given and match the corpus feature
// dimension (CheckpointIncompatible otherwise). Epoch counting restarts;
// the optimizer step and moments carry over. With zero epochs the output
// checkpoint is a copy of the input.
TrainResult finetune(const std::string &checkpoint, const std::string &manifest_path,
                     const TrainConfig &cfg,
                     const std::optional<model::ModelConfig> &expected = std::nullopt);

}  // namespace eda::train

#endif  // EDA_TRAINENGINE_HPP_
