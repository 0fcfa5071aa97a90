// tests/oracles.hpp
//
// Independent reference computations shared by the unit tests and the
// acceptance runner. None of these call into the code they check.

#ifndef EDA_TESTS_ORACLES_HPP_
#define EDA_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eda/diffcore.hpp"

namespace oracle {

using DMat = eda::ad::Matrix<double>;

inline std::string tmp_dir(const std::string &name) {
  const char *root = std::getenv("EDA_TEST_TMP");
  std::filesystem::path p = root && *root ? std::filesystem::path(root)
                                          : std::filesystem::temp_directory_path() / "eda_tests";
  p /= name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline DMat random_matrix(std::mt19937_64 &rng, eda::ad::Index r, eda::ad::Index c,
                          double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  DMat m(r, c);
  for (eda::ad::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// |X[k]|^2 by the O(n^2) definition, k = 0 .. n/2.
inline std::vector<double> dft_power(const std::vector<double> &x) {
  const std::size_t n = x.size();
  std::vector<double> p(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = -2.0 * M_PI * static_cast<double>(k * t % n) / static_cast<double>(n);
      re += x[t] * std::cos(a);
      im += x[t] * std::sin(a);
    }
    p[k] = re * re + im * im;
  }
  return p;
}

inline double bce_elem(double y, double p) {
  const double eps = 1e-7;
  const double q = std::min(std::max(p, eps), 1.0 - eps);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

struct PitAnswer {
  double loss = 0.0;
  std::vector<int> perm;
};

// Walks every permutation in lexicographic order and keeps the first
// strict minimum of (1/TS) sum_t sum_s H(y[t][perm[s]], p[s][t]).
inline PitAnswer enumerate_pit(const DMat &probs_st, const DMat &labels_ts) {
  const int S = static_cast<int>(probs_st.rows());
  const auto T = probs_st.cols();
  std::vector<int> perm(S);
  std::iota(perm.begin(), perm.end(), 0);
  PitAnswer best;
  best.loss = std::numeric_limits<double>::infinity();
  do {
    double acc = 0.0;
    for (eda::ad::Index t = 0; t < T; ++t)
      for (int s = 0; s < S; ++s) acc += bce_elem(labels_ts(t, perm[s]), probs_st(s, t));
    acc /= static_cast<double>(T * S);
    if (acc < best.loss) {
      best.loss = acc;
      best.perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Speaker count by scanning from the end for the last p >= tau.
inline int count_scan(const std::vector<double> &p, double tau) {
  for (std::size_t i = p.size(); i-- > 0;)
    if (p[i] >= tau) return static_cast<int>(i) + 1;
  return 0;
}

// Cyclic Jacobi rotations for a symmetric matrix; eigenvalues descending.
inline void jacobi_eigen(DMat a, Eigen::VectorXd &values, DMat &vectors) {
  const auto n = a.rows();
  vectors = DMat::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (eda::ad::Index i = 0; i < n; ++i)
      for (eda::ad::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-30) break;
    for (eda::ad::Index p = 0; p < n; ++p) {
      for (eda::ad::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (eda::ad::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (eda::ad::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (eda::ad::Index k = 0; k < n; ++k) {
          const double vkp = vectors(k, p), vkq = vectors(k, q);
          vectors(k, p) = c * vkp - s * vkq;
          vectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<eda::ad::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), eda::ad::Index{0});
  std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return a(x, x) > a(y, y); });
  values.resize(n);
  DMat sorted(n, n);
  for (eda::ad::Index k = 0; k < n; ++k) {
    values(k) = a(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(k)]);
    sorted.col(k) = vectors.col(idx[static_cast<std::size_t>(k)]);
  }
  vectors = sorted;
}

// Norm-wise relative error ||a - b|| / max(||a|| + ||b||, floor). The floor
// keeps gradients that are identically zero (e.g. a key bias under softmax)
// from turning finite-difference noise into a relative error of 1.
inline double rel_error(const DMat &a, const DMat &b, double floor = 1e-12) {
  return (a - b).norm() / std::max(a.norm() + b.norm(), floor);
}

inline constexpr double kGradFloor = 1e-6;

// Gradient check of build(inputs) contracted with a fixed random weight.
// Returns the worst relative error over inputs.
using Builder = std::function<eda::ad::Var<double>(eda::ad::Tape<double> &,
                                                   const std::vector<eda::ad::Var<double>> &)>;

inline double grad_check(const Builder &build, std::vector<DMat> inputs, std::uint64_t seed,
                         double h = 1e-5) {
  using namespace eda::ad;
  std::mt19937_64 rng(seed);
  DMat weight;
  auto eval = [&](const std::vector<DMat> &xs, std::vector<DMat> *grads) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const DMat &x : xs) vars.push_back(tape.variable(x));
    Var<double> y = build(tape, vars);
    if (weight.size() == 0) weight = random_matrix(rng, y.rows(), y.cols());
    Var<double> loss = sum(mul(y, tape.constant(weight)));
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (std::size_t i = 0; i < vars.size(); ++i) {
        DMat g = vars[i].grad();
        if (g.size() == 0) g = DMat::Zero(xs[i].rows(), xs[i].cols());
        grads->push_back(g);
      }
    }
    return loss.value()(0, 0);
  };
  std::vector<DMat> analytic;
  eval(inputs, &analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    DMat numeric(inputs[i].rows(), inputs[i].cols());
    for (eda::ad::Index k = 0; k < inputs[i].size(); ++k) {
      const double orig = inputs[i].data()[k];
      inputs[i].data()[k] = orig + h;
      const double fp = eval(inputs, nullptr);
      inputs[i].data()[k] = orig - h;
      const double fm = eval(inputs, nullptr);
      inputs[i].data()[k] = orig;
      numeric.data()[k] = (fp - fm) / (2.0 * h);
    }
    worst = std::max(worst, rel_error(analytic[i], numeric, kGradFloor));
  }
  return worst;
}

// Overlap ratio by counting frames.
inline double frame_overlap_ratio(const eda::ad::Matrix<float> &act) {
  int speech = 0, overlap = 0;
  for (eda::ad::Index t = 0; t < act.rows(); ++t) {
    int n = 0;
    for (eda::ad::Index s = 0; s < act.cols(); ++s) n += act(t, s) > 0.5f ? 1 : 0;
    speech += n >= 1;
    overlap += n >= 2;
  }
  return speech ? static_cast<double>(overlap) / speech : 0.0;
}

}  // namespace oracle

#endif  // EDA_TESTS_ORACLES_HPP_
