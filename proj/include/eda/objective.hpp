// eda/objective.hpp
//
// Training objective: permutation-invariant diarization loss, attractor
// existence loss, and their weighted sum L = L_d + alpha * L_a.
//
// Permutation convention: perm[s] is the label column matched to output
// (attractor) s, i.e. the loss compares y_{t, perm[s]} with yhat_{s, t}.

#ifndef EDA_OBJECTIVE_HPP_
#define EDA_OBJECTIVE_HPP_

#include <span>
#include <vector>

#include "eda/diffcore.hpp"

namespace eda::objective {

inline constexpr double kProbEps = 1e-7;
inline constexpr double kAlphaSimulated = 1.0;
inline constexpr double kAlphaAdaptation = 0.01;

// Binary cross entropy of one cell after clamping p to [eps, 1 - eps].
inline double bce_term(double y, double p, double eps = kProbEps) {
  const double pc = p < eps ? eps : (p > 1.0 - eps ? 1.0 - eps : p);
  return -y * std::log(pc) - (1.0 - y) * std::log(1.0 - pc);
}

// sum_s -y_s log p_s - (1 - y_s) log(1 - p_s). Throws ShapeError on length
// mismatch.
double bce(std::span<const double> y, std::span<const double> p,
           double eps = kProbEps);

struct PitOptions {
  int max_exhaustive_speakers = 8;
  bool use_hungarian = false;  // solve the assignment instead of enumerating
};

struct PitResult {
  double loss = 0.0;
  std::vector<int> permutation;
};

// probs: S x T posteriors; labels: T x S binary. Returns
//   (1 / TS) * min_perm sum_t H(y_t^perm, yhat_t)
// with the lexicographically smallest minimising permutation.
PitResult pit_loss(const ad::Matrix<double> &probs,
                   const ad::Matrix<double> &labels,
                   const PitOptions &opts = {});

// Pairwise cost C(s, j) = sum_t H(y_{t,j}, yhat_{s,t}) from posterior logits
// (T x S) and labels (T x S).
Eigen::MatrixXd pairwise_bce_from_logits(const ad::Matrix<double> &logits_ts,
                                         const ad::Matrix<double> &labels_ts);

// p has S + 1 entries; target is S ones followed by a zero.
double attractor_existence_loss(std::span<const double> p, int n_speakers);

double total_loss(double l_d, double l_a, double alpha);

struct LossReport {
  double total = 0.0;
  double l_d = 0.0;
  double l_a = 0.0;
  std::vector<int> best_permutation;
  double alpha = 1.0;
};

LossReport evaluate(const ad::Matrix<double> &probs,
                    const ad::Matrix<double> &labels,
                    std::span<const double> existence, double alpha,
                    const PitOptions &opts = {});

// Differentiable version used by training.
template <typename Scalar>
struct TrainingLoss {
  ad::Var<Scalar> total;
  double l_d = 0.0;
  double l_a = 0.0;
  std::vector<int> permutation;
};

// posterior_logits: T x S (S may be 0, then pass an invalid Var);
// existence_logits: (S + 1) x 1; labels: T x S.
template <typename Scalar>
TrainingLoss<Scalar> eda_loss(ad::Var<Scalar> posterior_logits,
                              ad::Var<Scalar> existence_logits,
                              const ad::Matrix<Scalar> &labels, double alpha,
                              const PitOptions &opts = {});

// Shared search: returns the minimising permutation of a square pairwise
// cost matrix (exhaustive, or Hungarian when enabled).
std::vector<int> best_permutation(const Eigen::MatrixXd &cost,
                                  const PitOptions &opts);

}  // namespace eda::objective

#endif  // EDA_OBJECTIVE_HPP_
