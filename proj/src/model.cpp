// src/model.cpp

#include "eda/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "eda/errors.hpp"

namespace eda::model {

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.encoder.n_blocks = 2;
  c.encoder.d_model = 64;
  c.encoder.n_heads = 4;
  c.encoder.d_ff = 256;
  return c;
}

void ModelConfig::validate() const {
  const auto &e = encoder;
  if (e.n_blocks < 0) throw ConfigInvalid("n_blocks must be >= 0");
  if (e.d_model < 1 || e.n_heads < 1 || e.d_ff < 1 || e.input_dim < 1)
    throw ConfigInvalid("model dimensions must be positive");
  if (e.d_model % e.n_heads != 0)
    throw ConfigInvalid("d_model (" + std::to_string(e.d_model) +
                        ") must be divisible by n_heads (" +
                        std::to_string(e.n_heads) + ")");
  if (!(e.layer_norm_eps > 0.0)) throw ConfigInvalid("layer_norm_eps must be > 0");
  if (eda.n_layers < 1) throw ConfigInvalid("eda n_layers must be >= 1");
}

std::map<std::string, std::string> ModelConfig::to_meta() const {
  std::ostringstream eps;
  eps.precision(17);
  eps << encoder.layer_norm_eps;
  return {
      {"model.n_blocks", std::to_string(encoder.n_blocks)},
      {"model.d_model", std::to_string(encoder.d_model)},
      {"model.n_heads", std::to_string(encoder.n_heads)},
      {"model.d_ff", std::to_string(encoder.d_ff)},
      {"model.input_dim", std::to_string(encoder.input_dim)},
      {"model.positional_encoding", encoder.positional_encoding ? "true" : "false"},
      {"model.layer_norm_eps", eps.str()},
      {"model.eda_layers", std::to_string(eda.n_layers)},
  };
}

ModelConfig ModelConfig::from_meta(const std::map<std::string, std::string> &meta) {
  auto get = [&](const std::string &k) -> const std::string & {
    auto it = meta.find(k);
    if (it == meta.end()) throw CheckpointIncompatible("missing metadata " + k);
    return it->second;
  };
  ModelConfig c;
  try {
    c.encoder.n_blocks = std::stoi(get("model.n_blocks"));
    c.encoder.d_model = std::stoi(get("model.d_model"));
    c.encoder.n_heads = std::stoi(get("model.n_heads"));
    c.encoder.d_ff = std::stoi(get("model.d_ff"));
    c.encoder.input_dim = std::stoi(get("model.input_dim"));
    c.encoder.positional_encoding = get("model.positional_encoding") == "true";
    c.encoder.layer_norm_eps = std::stod(get("model.layer_norm_eps"));
    c.eda.n_layers = std::stoi(get("model.eda_layers"));
  } catch (const std::invalid_argument &) {
    throw CheckpointIncompatible("malformed model metadata");
  }
  c.validate();
  return c;
}

std::string ModelConfig::canonical() const {
  std::string s;
  for (const auto &[k, v] : to_meta()) s += k + "=" + v + "\n";
  return s;
}

std::uint64_t ModelConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

OrderMode parse_order_mode(const std::string &s) {
  if (s == "chronological") return OrderMode::kChronological;
  if (s == "shuffled") return OrderMode::kShuffled;
  throw ConfigInvalid("order must be 'chronological' or 'shuffled', got '" + s + "'");
}

std::string to_string(OrderMode m) {
  return m == OrderMode::kChronological ? "chronological" : "shuffled";
}

std::vector<ad::Index> shuffled_order(ad::Index n, std::uint64_t seed) {
  std::vector<ad::Index> order(static_cast<std::size_t>(n));
  for (ad::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  for (ad::Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<ad::Index> pick(0, i);
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(pick(rng))]);
  }
  return order;
}

template <typename Scalar>
ad::Matrix<Scalar> sinusoid_positions(ad::Index T, int d_model) {
  ad::Matrix<Scalar> pe(T, d_model);
  for (ad::Index t = 0; t < T; ++t) {
    for (int i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, -2.0 * (i / 2) / d_model);
      const double a = static_cast<double>(t) * rate;
      pe(t, i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return pe;
}

namespace {

template <typename Scalar>
ad::Matrix<Scalar> uniform(std::mt19937_64 &rng, int rows, int cols, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  ad::Matrix<Scalar> m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(u(rng));
  return m;
}

template <typename Scalar>
ad::Matrix<Scalar> xavier(std::mt19937_64 &rng, int in, int out) {
  return uniform<Scalar>(rng, in, out, std::sqrt(6.0 / (in + out)));
}

}  // namespace

template <typename Scalar>
int EendEda<Scalar>::add_param(const std::string &name, Mat value) {
  const int idx = static_cast<int>(params_.size());
  params_.emplace_back(name, std::move(value));
  index_[name] = idx;
  return idx;
}

template <typename Scalar>
EendEda<Scalar>::EendEda(const ModelConfig &cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  const auto &e = cfg_.encoder;
  const int D = e.d_model;
  std::mt19937_64 rng(init_seed);
  params_.reserve(64 + 16 * static_cast<std::size_t>(e.n_blocks));

  auto make_linear = [&](const std::string &name, int in, int out) {
    Linear l;
    l.w = add_param(name + ".w", xavier<Scalar>(rng, in, out));
    l.b = add_param(name + ".b", Mat::Zero(1, out));
    return l;
  };
  auto make_norm = [&](const std::string &name) {
    Norm n;
    n.g = add_param(name + ".g", Mat::Ones(1, D));
    n.b = add_param(name + ".b", Mat::Zero(1, D));
    return n;
  };

  input_ = make_linear("enc.in", e.input_dim, D);
  for (int i = 0; i < e.n_blocks; ++i) {
    const std::string p = "enc.block" + std::to_string(i);
    Block b;
    b.ln1 = make_norm(p + ".ln1");
    b.q = make_linear(p + ".attn.q", D, D);
    b.k = make_linear(p + ".attn.k", D, D);
    b.v = make_linear(p + ".attn.v", D, D);
    b.o = make_linear(p + ".attn.o", D, D);
    b.ln2 = make_norm(p + ".ln2");
    b.ff1 = make_linear(p + ".ff1", D, e.d_ff);
    b.ff2 = make_linear(p + ".ff2", e.d_ff, D);
    blocks_.push_back(b);
  }
  out_norm_ = make_norm("enc.ln_out");

  const double lb = 1.0 / std::sqrt(static_cast<double>(D));
  for (int l = 0; l < cfg_.eda.n_layers; ++l) {
    const std::string p = "eda.enc" + std::to_string(l);
    Lstm s;
    s.w_ih = add_param(p + ".w_ih", uniform<Scalar>(rng, D, 4 * D, lb));
    s.w_hh = add_param(p + ".w_hh", uniform<Scalar>(rng, D, 4 * D, lb));
    s.b = add_param(p + ".b", uniform<Scalar>(rng, 1, 4 * D, lb));
    enc_lstm_.push_back(s);
  }
  for (int l = 0; l < cfg_.eda.n_layers; ++l) {
    const std::string p = "eda.dec" + std::to_string(l);
    Lstm s;
    // Layer 0 only ever sees zero inputs, so it has no input weights.
    if (l > 0) s.w_ih = add_param(p + ".w_ih", uniform<Scalar>(rng, D, 4 * D, lb));
    s.w_hh = add_param(p + ".w_hh", uniform<Scalar>(rng, D, 4 * D, lb));
    s.b = add_param(p + ".b", uniform<Scalar>(rng, 1, 4 * D, lb));
    dec_lstm_.push_back(s);
  }
  exist_.w = add_param("eda.exist.w", uniform<Scalar>(rng, D, 1, lb));
  exist_.b = add_param("eda.exist.b", Mat::Zero(1, 1));
}

template <typename Scalar>
typename EendEda<Scalar>::V EendEda<Scalar>::use(ad::Tape<Scalar> &tape, int idx) {
  return tape.parameter(params_[static_cast<std::size_t>(idx)]);
}

template <typename Scalar>
typename EendEda<Scalar>::V EendEda<Scalar>::linear(ad::Tape<Scalar> &tape, V x,
                                                    const Linear &l) {
  return ad::linear(x, use(tape, l.w), use(tape, l.b));
}

template <typename Scalar>
typename EendEda<Scalar>::V EendEda<Scalar>::norm(ad::Tape<Scalar> &tape, V x,
                                                  const Norm &n) {
  return ad::layer_norm(x, use(tape, n.g), use(tape, n.b),
                        static_cast<Scalar>(cfg_.encoder.layer_norm_eps));
}

template <typename Scalar>
typename EendEda<Scalar>::V EendEda<Scalar>::encode(ad::Tape<Scalar> &tape,
                                                    const Mat &features) {
  const auto &e = cfg_.encoder;
  if (features.cols() != e.input_dim)
    throw ShapeError("encode: feature dim " + std::to_string(features.cols()) +
                     " != model input_dim " + std::to_string(e.input_dim));
  if (features.rows() < 1) throw ShapeError("encode: no frames");
  const auto T = features.rows();
  V x = linear(tape, tape.constant(features), input_);
  if (e.positional_encoding)
    x = ad::add(x, tape.constant(sinusoid_positions<Scalar>(T, e.d_model)));

  const int dk = e.d_model / e.n_heads;
  const Scalar att_scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dk));
  for (const Block &b : blocks_) {
    V a = norm(tape, x, b.ln1);
    V q = linear(tape, a, b.q);
    V k = linear(tape, a, b.k);
    V v = linear(tape, a, b.v);
    std::vector<V> heads;
    heads.reserve(static_cast<std::size_t>(e.n_heads));
    for (int h = 0; h < e.n_heads; ++h) {
      V qh = ad::slice_cols(q, h * dk, dk);
      V kh = ad::slice_cols(k, h * dk, dk);
      V vh = ad::slice_cols(v, h * dk, dk);
      V p = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), att_scale));
      heads.push_back(ad::matmul(p, vh));
    }
    V att = e.n_heads == 1 ? heads[0] : ad::concat_cols(heads);
    x = ad::add(x, linear(tape, att, b.o));
    V f = norm(tape, x, b.ln2);
    f = linear(tape, ad::relu(linear(tape, f, b.ff1)), b.ff2);
    x = ad::add(x, f);
  }
  return norm(tape, x, out_norm_);
}

template <typename Scalar>
typename EendEda<Scalar>::EdaOutput EendEda<Scalar>::eda(
    ad::Tape<Scalar> &tape, V embeddings, std::span<const ad::Index> order,
    int n_attractors) {
  const int D = cfg_.encoder.d_model;
  if (embeddings.cols() != D)
    throw ShapeError("eda: embedding width " + std::to_string(embeddings.cols()) +
                     " != d_model " + std::to_string(D));
  if (embeddings.rows() < 1) throw ShapeError("eda: no embeddings");
  if (n_attractors < 1) throw ShapeError("eda: need at least one attractor");
  if (!order.empty() && static_cast<ad::Index>(order.size()) != embeddings.rows())
    throw ShapeError("eda: order length does not match T");

  V seq = order.empty()
              ? embeddings
              : ad::gather_rows(embeddings, std::vector<ad::Index>(order.begin(), order.end()));
  const auto T = seq.rows();
  const int L = cfg_.eda.n_layers;

  std::vector<ad::LstmState<Scalar>> states;
  for (int l = 0; l < L; ++l) {
    const Lstm &p = enc_lstm_[static_cast<std::size_t>(l)];
    V w_hh = use(tape, p.w_hh), b = use(tape, p.b);
    V xproj = ad::matmul(seq, use(tape, p.w_ih));
    ad::LstmState<Scalar> st{tape.constant(Mat::Zero(1, D)), tape.constant(Mat::Zero(1, D))};
    std::vector<V> outs;
    if (l + 1 < L) outs.reserve(static_cast<std::size_t>(T));
    for (ad::Index t = 0; t < T; ++t) {
      st = ad::lstm_step(ad::slice_rows(xproj, t, 1), st, w_hh, b);
      if (l + 1 < L) outs.push_back(st.h);
    }
    states.push_back(st);
    if (l + 1 < L) seq = ad::concat_rows(outs);
  }

  std::vector<V> w_hh(L), bias(L), w_ih(L);
  for (int l = 0; l < L; ++l) {
    const Lstm &p = dec_lstm_[static_cast<std::size_t>(l)];
    w_hh[l] = use(tape, p.w_hh);
    bias[l] = use(tape, p.b);
    if (p.w_ih >= 0) w_ih[l] = use(tape, p.w_ih);
  }
  std::vector<V> attractors;
  attractors.reserve(static_cast<std::size_t>(n_attractors));
  for (int s = 0; s < n_attractors; ++s) {
    for (int l = 0; l < L; ++l) {
      auto &st = states[static_cast<std::size_t>(l)];
      if (l == 0)
        st = ad::lstm_step(V{}, st, w_hh[0], bias[0]);
      else
        st = ad::lstm_cell(states[static_cast<std::size_t>(l - 1)].h, st, w_ih[l], w_hh[l], bias[l]);
    }
    attractors.push_back(states.back().h);
  }
  EdaOutput out;
  out.attractors = n_attractors == 1 ? attractors[0] : ad::concat_rows(attractors);
  out.existence_logits = linear(tape, out.attractors, exist_);
  return out;
}

template <typename Scalar>
typename EendEda<Scalar>::V EendEda<Scalar>::posterior_logits(V embeddings, V attractors) {
  return ad::matmul_nt(embeddings, attractors);
}

template <typename Scalar>
std::vector<ad::Parameter<Scalar> *> EendEda<Scalar>::parameters() {
  std::vector<ad::Parameter<Scalar> *> out;
  for (auto &p : params_) out.push_back(&p);
  return out;
}

template <typename Scalar>
std::vector<const ad::Parameter<Scalar> *> EendEda<Scalar>::parameters() const {
  std::vector<const ad::Parameter<Scalar> *> out;
  for (const auto &p : params_) out.push_back(&p);
  return out;
}

template <typename Scalar>
ad::Parameter<Scalar> &EendEda<Scalar>::param(const std::string &name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigInvalid("no parameter named " + name);
  return params_[static_cast<std::size_t>(it->second)];
}

template <typename Scalar>
const ad::Parameter<Scalar> &EendEda<Scalar>::param(const std::string &name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigInvalid("no parameter named " + name);
  return params_[static_cast<std::size_t>(it->second)];
}

template <typename Scalar>
std::size_t EendEda<Scalar>::num_scalars() const {
  std::size_t n = 0;
  for (const auto &p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename Scalar>
void EendEda<Scalar>::export_tensors(io::Archive &a) const {
  for (const auto &p : params_) {
    io::Tensor t;
    t.dims = {static_cast<std::uint64_t>(p.value.rows()),
              static_cast<std::uint64_t>(p.value.cols())};
    t.data.resize(static_cast<std::size_t>(p.value.size()));
    for (ad::Index i = 0; i < p.value.size(); ++i)
      t.data[static_cast<std::size_t>(i)] = static_cast<float>(p.value.data()[i]);
    a.tensors.emplace_back("param/" + p.name, std::move(t));
  }
  if (trained_speakers_ > 0) a.meta["train.max_speakers_seen"] = std::to_string(trained_speakers_);
}

template <typename Scalar>
void EendEda<Scalar>::import_tensors(const io::Archive &a) {
  for (auto &p : params_) {
    const io::Tensor *t = a.find("param/" + p.name);
    if (!t) throw CheckpointIncompatible("checkpoint lacks parameter " + p.name);
    if (t->dims.size() != 2 || t->dims[0] != static_cast<std::uint64_t>(p.value.rows()) ||
        t->dims[1] != static_cast<std::uint64_t>(p.value.cols()))
      throw CheckpointIncompatible("shape mismatch for parameter " + p.name);
    for (ad::Index i = 0; i < p.value.size(); ++i)
      p.value.data()[i] = static_cast<Scalar>(t->data[static_cast<std::size_t>(i)]);
  }
  const auto it = a.meta.find("train.max_speakers_seen");
  trained_speakers_ = 0;
  if (it != a.meta.end()) {
    try {
      trained_speakers_ = std::stoi(it->second);
    } catch (const std::exception &) {
      throw CheckpointIncompatible("malformed train.max_speakers_seen");
    }
  }
}

template class EendEda<float>;
template class EendEda<double>;
template ad::Matrix<float> sinusoid_positions<float>(ad::Index, int);
template ad::Matrix<double> sinusoid_positions<double>(ad::Index, int);

void save_model(const std::string &path, const EendEda<float> &model,
                const std::map<std::string, std::string> &extra_meta) {
  io::Archive a;
  a.meta = extra_meta;
  for (const auto &[k, v] : model.config().to_meta()) a.meta[k] = v;
  a.meta["kind"] = "eend-eda-model";
  a.meta["config_hash"] = std::to_string(model.config().hash());
  model.export_tensors(a);
  io::write_archive(path, a);
}

EendEda<float> load_model(const std::string &path) {
  const io::Archive a = io::read_archive(path);
  EendEda<float> m(ModelConfig::from_meta(a.meta), 0);
  m.import_tensors(a);
  return m;
}

}  // namespace eda::model
