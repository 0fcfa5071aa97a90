// eda/model.hpp
//
// Self-attentive embedding stack plus encoder-decoder attractors.
//
//   features (T x F) -> linear -> [LN -> MHSA -> +res -> LN -> FFN -> +res] x N
//                    -> LN  = E (T x D)
//   E rows (chronological or permuted) -> LSTM encoder -> (h0, c0)
//   (h0, c0), zero inputs -> LSTM decoder, one step per attractor -> A (S x D)
//   existence logits = A w + b;  posterior logits = E A^T (T x S)

#ifndef EDA_MODEL_HPP_
#define EDA_MODEL_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eda/diffcore.hpp"
#include "eda/tensor_io.hpp"

namespace eda::model {

struct EncoderConfig {
  int n_blocks = 4;
  int d_model = 256;
  int n_heads = 4;
  int d_ff = 1024;
  int input_dim = 345;
  bool positional_encoding = false;
  double layer_norm_eps = 1e-5;
};

struct EdaConfig {
  int n_layers = 1;
};

struct ModelConfig {
  EncoderConfig encoder;
  EdaConfig eda;

  static ModelConfig full();  // 4 blocks, D = 256
  static ModelConfig toy();   // 2 blocks, D = 64

  void validate() const;  // throws ConfigInvalid
  std::map<std::string, std::string> to_meta() const;
  static ModelConfig from_meta(const std::map<std::string, std::string> &meta);
  std::string canonical() const;
  std::uint64_t hash() const;
  bool operator==(const ModelConfig &o) const { return canonical() == o.canonical(); }
};

enum class OrderMode { kChronological, kShuffled };

OrderMode parse_order_mode(const std::string &s);
std::string to_string(OrderMode m);

// Uniformly random permutation of 0..n-1 determined by seed.
std::vector<ad::Index> shuffled_order(ad::Index n, std::uint64_t seed);

template <typename Scalar>
class EendEda {
 public:
  using Mat = ad::Matrix<Scalar>;
  using V = ad::Var<Scalar>;

  EendEda(const ModelConfig &cfg, std::uint64_t init_seed);

  const ModelConfig &config() const { return cfg_; }

  // T x D embeddings. Throws ShapeError if features.cols() != input_dim.
  V encode(ad::Tape<Scalar> &tape, const Mat &features);

  struct EdaOutput {
    V attractors;        // n x D
    V existence_logits;  // n x 1
  };

  // `order` lists the embedding rows in the order the LSTM encoder consumes
  // them; empty means chronological.
  EdaOutput eda(ad::Tape<Scalar> &tape, V embeddings,
                std::span<const ad::Index> order, int n_attractors);

  // T x S logits of E A^T.
  static V posterior_logits(V embeddings, V attractors);

  std::vector<ad::Parameter<Scalar> *> parameters();
  std::vector<const ad::Parameter<Scalar> *> parameters() const;
  ad::Parameter<Scalar> &param(const std::string &name);
  const ad::Parameter<Scalar> &param(const std::string &name) const;
  std::size_t num_scalars() const;

  // Largest label speaker count seen in training (0: unknown). Decoder steps
  // past this count + 1 were never supervised.
  int trained_speakers() const { return trained_speakers_; }
  void note_trained_speakers(int s) { trained_speakers_ = std::max(trained_speakers_, s); }

  // Checkpoint tensors are stored as float32.
  void export_tensors(io::Archive &a) const;
  void import_tensors(const io::Archive &a);  // throws CheckpointIncompatible

 private:
  int add_param(const std::string &name, Mat value);
  V use(ad::Tape<Scalar> &tape, int idx);

  struct Linear { int w, b; };
  struct Norm { int g, b; };
  struct Block {
    Norm ln1, ln2;
    Linear q, k, v, o, ff1, ff2;
  };
  struct Lstm { int w_ih = -1, w_hh = -1, b = -1; };

  V linear(ad::Tape<Scalar> &tape, V x, const Linear &l);
  V norm(ad::Tape<Scalar> &tape, V x, const Norm &n);

  ModelConfig cfg_;
  std::vector<ad::Parameter<Scalar>> params_;
  std::map<std::string, int> index_;
  Linear input_{};
  std::vector<Block> blocks_;
  Norm out_norm_{};
  std::vector<Lstm> enc_lstm_, dec_lstm_;
  Linear exist_{};
  int trained_speakers_ = 0;
};

// Fixed sinusoidal position table (T x D), used only when enabled.
template <typename Scalar>
ad::Matrix<Scalar> sinusoid_positions(ad::Index T, int d_model);

void save_model(const std::string &path, const EendEda<float> &model,
                const std::map<std::string, std::string> &extra_meta = {});
EendEda<float> load_model(const std::string &path);

}  // namespace eda::model

#endif  // EDA_MODEL_HPP_
