// eda/optimizer.hpp
//
// Adam with the inverse-square-root warm-up schedule:
//   lr(step) = base_lr * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)

#ifndef EDA_OPTIMIZER_HPP_
#define EDA_OPTIMIZER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "eda/diffcore.hpp"

namespace eda::ad {

struct AdamConfig {
  double base_lr = 1.0;
  std::int64_t warmup_steps = 4000;
  int d_model = 256;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// Warm-up preset used for 100k-mixture training runs.
inline constexpr std::int64_t kPaperWarmupSteps = 100000;

inline double warmup_lr(std::int64_t step, const AdamConfig &cfg) {
  if (step < 1) step = 1;
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(std::max<std::int64_t>(cfg.warmup_steps, 1));
  return cfg.base_lr / std::sqrt(static_cast<double>(cfg.d_model)) *
         std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

template <typename Scalar>
struct AdamState {
  std::int64_t step = 0;
  std::vector<Matrix<Scalar>> first_moment;
  std::vector<Matrix<Scalar>> second_moment;
};

template <typename Scalar>
class Adam {
 public:
  Adam(AdamConfig cfg, std::vector<Parameter<Scalar> *> params)
      : cfg_(cfg), params_(std::move(params)) {
    state_.first_moment.reserve(params_.size());
    state_.second_moment.reserve(params_.size());
    for (auto *p : params_) {
      state_.first_moment.push_back(
          Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      state_.second_moment.push_back(
          Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  // Applies one update from the accumulated Parameter::grad. Parameters with
  // no gradient are treated as having a zero gradient. Returns the lr used.
  double step() {
    ++state_.step;
    const double lr = warmup_lr(state_.step, cfg_);
    const double t = static_cast<double>(state_.step);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    const Scalar b1 = static_cast<Scalar>(cfg_.beta1);
    const Scalar b2 = static_cast<Scalar>(cfg_.beta2);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter<Scalar> &p = *params_[k];
      if (p.grad.size() == 0) p.zero_grad();
      auto &m = state_.first_moment[k];
      auto &v = state_.second_moment[k];
      m = b1 * m + (Scalar(1) - b1) * p.grad;
      v = b2 * v + (Scalar(1) - b2) * p.grad.cwiseAbs2();
      const Scalar step_size = static_cast<Scalar>(lr / bc1);
      const Scalar denom_scale = static_cast<Scalar>(1.0 / std::sqrt(bc2));
      const Scalar eps = static_cast<Scalar>(cfg_.eps);
      p.value.array() -=
          step_size * m.array() / (v.array().sqrt() * denom_scale + eps);
    }
    return lr;
  }

  void zero_grad() {
    for (auto *p : params_) p->zero_grad();
  }

  double current_lr() const {
    return warmup_lr(std::max<std::int64_t>(state_.step, 1), cfg_);
  }

  const AdamConfig &config() const { return cfg_; }
  void set_config(const AdamConfig &cfg) { cfg_ = cfg; }
  AdamState<Scalar> &state() { return state_; }
  const AdamState<Scalar> &state() const { return state_; }

 private:
  AdamConfig cfg_;
  std::vector<Parameter<Scalar> *> params_;
  AdamState<Scalar> state_;
};

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(const std::vector<Parameter<Scalar> *> &params,
                      double max_norm) {
  double sq = 0.0;
  for (const auto *p : params)
    if (p->grad.size() != 0) sq += static_cast<double>(p->grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const Scalar f = static_cast<Scalar>(max_norm / (norm + 1e-12));
    for (auto *p : params)
      if (p->grad.size() != 0) p->grad *= f;
  }
  return norm;
}

}  // namespace eda::ad

#endif  // EDA_OPTIMIZER_HPP_
