#pragma once

// Independent brute-force references: dense assemblies of the
// parameter-to-observable map and prior precision on coarse problems, exact
// dense posterior/spectrum/information-gain evaluation, central-difference
// gradients, and a Jansen pick-freeze estimator for total Sobol indices.
// Everything here goes through public operations only and stays independent
// of the low-rank implementation paths it is used to check.

#include <functional>
#include <utility>
#include <vector>

#include "igsense/bayes.hpp"
#include "igsense/core.hpp"
#include "igsense/rng.hpp"

namespace igsense {
namespace oracle {

struct DenseProblem {
  Mat g;                // N_obs x n, columns assembled by basis-vector solves
  Vec f;                // affine part of the parameter-to-observable map
  Mat prior_precision;  // n x n dense
  Vec noise_var;
  Vec m_prior;
};

inline constexpr Eigen::Index kDenseDimensionGuard = 2000;

inline DenseProblem build_dense_problem(const InverseProblem& ip, const ThetaVector& theta) {
  const Eigen::Index n = ip.model->parameter_dim();
  if (n > kDenseDimensionGuard)
    throw DimensionGuard("build_dense_problem: parameter dimension " + std::to_string(n) +
                         " exceeds the desk-scale guard " + std::to_string(kDenseDimensionGuard));
  DenseProblem dp;
  dp.f = ip.model->observe(solve_state(*ip.model, Vec::Zero(n), theta, *ip.counter));
  dp.g.resize(ip.model->n_obs(), n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Vec e = Vec::Zero(n);
    e(k) = 1.0;
    dp.g.col(k) = ip.model->observe(solve_incremental_state(*ip.model, e, theta, *ip.counter));
  }
  dp.prior_precision.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Vec e = Vec::Zero(n);
    e(k) = 1.0;
    dp.prior_precision.col(k) = ip.prior->apply_precision(e);
  }
  dp.prior_precision = 0.5 * (dp.prior_precision + dp.prior_precision.transpose()).eval();
  dp.noise_var = ip.data.noise_var;
  dp.m_prior = ip.prior->mean();
  return dp;
}

struct DenseKldResult {
  double phi_ig = 0.0;
  double phi_ig_bar = 0.0;
  Vec m_post;
  Vec gammas;  // full generalized spectrum, nonincreasing
};

// Exact dense evaluation: posterior from the normal equations, generalized
// spectrum of (G' Gamma^{-1} G, prior precision), and the information gain
// with all terms (no truncation).
inline DenseKldResult dense_kld(const DenseProblem& dp, const Vec& u_obs) {
  const Eigen::Index n = dp.g.cols();
  const Mat misfit = dp.g.transpose() * dp.noise_var.cwiseInverse().asDiagonal() * dp.g;
  const Mat hessian = misfit + dp.prior_precision;

  Eigen::LDLT<Mat> h_factor(hessian);
  if (h_factor.info() != Eigen::Success)
    throw SingularOperator("dense_kld: dense Hessian factorization failed");
  const Mat c_post = h_factor.solve(Mat::Identity(n, n));

  DenseKldResult out;
  const Vec rhs = dp.g.transpose() * (u_obs - dp.f).cwiseQuotient(dp.noise_var) +
                  dp.prior_precision * dp.m_prior;
  out.m_post = h_factor.solve(rhs);

  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(misfit, dp.prior_precision);
  if (ges.info() != Eigen::Success)
    throw SingularOperator("dense_kld: generalized eigensolve failed");
  out.gammas = ges.eigenvalues().reverse();
  for (Eigen::Index i = 0; i < out.gammas.size(); ++i)
    out.gammas(i) = std::max(0.0, out.gammas(i));

  double logdet = 0.0;
  for (Eigen::Index i = 0; i < out.gammas.size(); ++i) logdet += std::log1p(out.gammas(i));
  out.phi_ig_bar = 0.5 * logdet;

  const Vec dm = out.m_post - dp.m_prior;
  out.phi_ig = 0.5 * (logdet - (misfit * c_post).trace() + dm.dot(dp.prior_precision * dm));
  return out;
}

// Central finite differences of a scalar function of theta, one-sided at the
// box boundary when one is given.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& theta, double h,
                       const Mat* box = nullptr) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient: h must be positive");
  Vec grad(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double lo = box ? (*box)(j, 0) : -std::numeric_limits<double>::infinity();
    const double hi = box ? (*box)(j, 1) : std::numeric_limits<double>::infinity();
    Vec t = theta;
    auto at = [&](double v) {
      t(j) = v;
      const double val = f(t);
      t(j) = theta(j);
      return val;
    };
    if (theta(j) - h < lo) {
      grad(j) = (-3.0 * at(theta(j)) + 4.0 * at(theta(j) + h) - at(theta(j) + 2.0 * h)) / (2.0 * h);
    } else if (theta(j) + h > hi) {
      grad(j) = (3.0 * at(theta(j)) - 4.0 * at(theta(j) - h) + at(theta(j) - 2.0 * h)) / (2.0 * h);
    } else {
      grad(j) = (at(theta(j) + h) - at(theta(j) - h)) / (2.0 * h);
    }
  }
  return grad;
}

struct PickFreezeResult {
  Vec s_tot;
  Vec std_err;  // batch standard errors (10 groups)
  double variance = 0.0;
};

// Jansen-form pick-freeze estimator of the total Sobol indices of f over
// independent uniform inputs:
//   S_tot_i ~= [ 1/(2N) sum_k (f(A_k) - f(AB_k^i))^2 ] / Var(f),
// where AB^i is the A sample with column i replaced from B.
inline PickFreezeResult pick_freeze_total_sobol(const std::function<double(const Vec&)>& f,
                                                const Vec& lo, const Vec& hi, int n_samples,
                                                std::uint64_t seed) {
  const Eigen::Index d = lo.size();
  if (hi.size() != d) throw DimensionMismatch("pick_freeze_total_sobol: bounds length mismatch");
  if (n_samples < 1000)
    throw std::invalid_argument("pick_freeze_total_sobol: need at least 1000 samples");

  auto draw = [&](std::uint64_t stream, int k, Eigen::Index i) {
    return rng::uniform(seed, stream * d + static_cast<std::uint64_t>(i),
                        static_cast<std::uint64_t>(k), lo(i), hi(i));
  };

  std::vector<double> fa(static_cast<std::size_t>(n_samples));
  std::vector<double> fb(static_cast<std::size_t>(n_samples));
  Mat fab(n_samples, d);
  Vec a(d), b(d), mix(d);
  for (int k = 0; k < n_samples; ++k) {
    for (Eigen::Index i = 0; i < d; ++i) {
      a(i) = draw(0, k, i);
      b(i) = draw(1, k, i);
    }
    fa[static_cast<std::size_t>(k)] = f(a);
    fb[static_cast<std::size_t>(k)] = f(b);
    for (Eigen::Index i = 0; i < d; ++i) {
      mix = a;
      mix(i) = b(i);
      fab(k, i) = f(mix);
    }
  }

  // Pooled variance over both base samples, (2N - 1) denominator.
  std::vector<double> pooled;
  pooled.reserve(2 * static_cast<std::size_t>(n_samples));
  pooled.insert(pooled.end(), fa.begin(), fa.end());
  pooled.insert(pooled.end(), fb.begin(), fb.end());
  const double mean = pairwise_sum(pooled) / static_cast<double>(pooled.size());
  std::vector<double> sq(pooled.size());
  for (std::size_t k = 0; k < pooled.size(); ++k) sq[k] = (pooled[k] - mean) * (pooled[k] - mean);
  const double variance = pairwise_sum(sq) / static_cast<double>(pooled.size() - 1);
  if (variance <= 1e-14)
    throw DegenerateVariance("pick_freeze_total_sobol: QoI variance is numerically zero");

  PickFreezeResult out;
  out.variance = variance;
  out.s_tot = Vec(d);
  out.std_err = Vec(d);
  constexpr int kBatches = 10;
  for (Eigen::Index i = 0; i < d; ++i) {
    std::vector<double> half_sq(static_cast<std::size_t>(n_samples));
    for (int k = 0; k < n_samples; ++k) {
      const double diff = fa[static_cast<std::size_t>(k)] - fab(k, i);
      half_sq[static_cast<std::size_t>(k)] = 0.5 * diff * diff;
    }
    out.s_tot(i) = pairwise_sum(half_sq) / (static_cast<double>(n_samples) * variance);

    // Batch means over contiguous groups estimate the sampling error.
    Vec batch(kBatches);
    const int len = n_samples / kBatches;
    for (int g = 0; g < kBatches; ++g) {
      const double s = pairwise_sum(half_sq.data() + static_cast<std::size_t>(g) * len,
                                    static_cast<std::size_t>(len));
      batch(g) = s / (static_cast<double>(len) * variance);
    }
    const double bmean = batch.mean();
    out.std_err(i) = std::sqrt((batch.array() - bmean).square().sum() / (kBatches - 1.0) /
                               kBatches);
  }
  return out;
}

}  // namespace oracle
}  // namespace igsense
