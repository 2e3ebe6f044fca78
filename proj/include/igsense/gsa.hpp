#pragma once

// Derivative-based global sensitivity of the information gain: the relative
// perturbation parameterization, Poincare constants for uniform inputs, and
// sample-average estimators of the derivative-based upper bounds on total
// Sobol indices,
//
//   S_tot_i  <=  C(F_i) E[(d Phi/d theta_i)^2] / Var[Phi].

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "igsense/bayes.hpp"
#include "igsense/core.hpp"
#include "igsense/hdsa.hpp"
#include "igsense/parallel.hpp"
#include "igsense/rng.hpp"

namespace igsense {

// Relative perturbation of nominal parameter values:
// vartheta_i = (1 + alpha theta_i) vartheta_bar_i with theta in [-1, 1]^d.
struct PerturbationMap {
  Vec nominal;
  double alpha = 0.05;

  PerturbationMap(Vec nominal_, double alpha_) : nominal(std::move(nominal_)), alpha(alpha_) {
    if ((nominal.array() == 0.0).any())
      throw ConfigError("PerturbationMap: nominal values must be nonzero");
  }

  int size() const { return static_cast<int>(nominal.size()); }

  Vec to_physical(const Vec& theta) const {
    return ((1.0 + alpha * theta.array()) * nominal.array()).matrix();
  }

  // Physical box swept by theta in [-1, 1], bounds sorted per coordinate.
  Mat physical_box() const {
    Mat box(nominal.size(), 2);
    for (Eigen::Index i = 0; i < nominal.size(); ++i) {
      const double a = (1.0 - alpha) * nominal(i);
      const double b = (1.0 + alpha) * nominal(i);
      box(i, 0) = std::min(a, b);
      box(i, 1) = std::max(a, b);
    }
    return box;
  }

  // Chain rule: d Phi/d theta_i = alpha * vartheta_bar_i * d Phi/d vartheta_i.
  Vec remap_gradient(const Vec& grad_physical) const {
    return (alpha * nominal.array() * grad_physical.array()).matrix();
  }
};

inline Vec remap_gradient(const PerturbationMap& pmap, const Vec& grad_physical) {
  return pmap.remap_gradient(grad_physical);
}

struct Distribution {
  enum class Kind { Uniform, Normal } kind = Kind::Uniform;
  double a = -1.0;  // uniform support [a, b]
  double b = 1.0;

  static Distribution uniform(double a, double b) { return Distribution{Kind::Uniform, a, b}; }
};

inline double poincare_constant(const Distribution& dist) {
  constexpr double pi = 3.14159265358979323846;
  switch (dist.kind) {
    case Distribution::Kind::Uniform:
      return (dist.b - dist.a) * (dist.b - dist.a) / (pi * pi);
    default:
      throw UnsupportedDistribution("poincare_constant: only uniform inputs are supported");
  }
}

struct DgsmReport {
  std::vector<std::string> names;
  Vec dgsm;           // mean-square partial derivatives in theta coordinates
  Vec poincare;       // per-coordinate Poincare constants
  Vec bound;          // upper bounds on the total Sobol indices
  Vec bound_std_err;  // sampling error of each bound, batched into 10 groups
  double variance = 0.0;
  int n_samples = 0;
  int n_failed = 0;  // skipped samples under FailurePolicy::Skip
  std::uint64_t seed = 0;
};

enum class FailurePolicy { Abort, Skip };

// Value-and-gradient of the quantity of interest at a unit-box sample;
// gradients are with respect to theta (already remapped).
using ValueGradFn = std::function<std::pair<double, Vec>(const Vec& theta_unit, int sample)>;

// Shared sample-average estimators: variance of the QoI with the (N-1)
// denominator and mean-square partials, both over the same i.i.d. uniform
// draws. Sample k of coordinate i is addressed as (seed, stream i, index k),
// so the result is independent of evaluation order and threading.
inline DgsmReport dgsm_bound_fn(const ValueGradFn& fn, int n_theta, int n_samples,
                                std::uint64_t seed, FailurePolicy policy = FailurePolicy::Abort) {
  if (n_samples < 2) throw std::invalid_argument("dgsm_bound: need at least two samples");
  if (n_theta < 1) throw std::invalid_argument("dgsm_bound: need at least one parameter");

  std::vector<double> values(static_cast<std::size_t>(n_samples));
  Mat grads(n_samples, n_theta);
  std::vector<char> ok(static_cast<std::size_t>(n_samples), 1);

  parallel_for(n_samples, [&](int k) {
    Vec theta(n_theta);
    for (int i = 0; i < n_theta; ++i)
      theta(i) = rng::uniform(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(k),
                              -1.0, 1.0);
    try {
      auto [value, grad] = fn(theta, k);
      if (grad.size() != n_theta) throw DimensionMismatch("dgsm_bound: gradient length mismatch");
      values[static_cast<std::size_t>(k)] = value;
      grads.row(k) = grad.transpose();
    } catch (const std::exception&) {
      if (policy == FailurePolicy::Abort) throw;
      ok[static_cast<std::size_t>(k)] = 0;
    }
  });

  std::vector<double> kept_values;
  std::vector<int> kept_index;
  kept_values.reserve(values.size());
  for (int k = 0; k < n_samples; ++k)
    if (ok[static_cast<std::size_t>(k)]) {
      kept_values.push_back(values[static_cast<std::size_t>(k)]);
      kept_index.push_back(k);
    }
  const int n_kept = static_cast<int>(kept_values.size());
  if (n_kept < 2) throw DegenerateVariance("dgsm_bound: fewer than two usable samples");

  const double mean = pairwise_sum(kept_values) / n_kept;
  std::vector<double> sq(kept_values.size());
  for (std::size_t k = 0; k < kept_values.size(); ++k)
    sq[k] = (kept_values[k] - mean) * (kept_values[k] - mean);
  const double variance = pairwise_sum(sq) / (n_kept - 1.0);
  if (variance <= 1e-14)
    throw DegenerateVariance("dgsm_bound: QoI variance is numerically zero over the box");

  DgsmReport report;
  report.variance = variance;
  report.n_samples = n_kept;
  report.n_failed = n_samples - n_kept;
  report.seed = seed;
  report.dgsm = Vec(n_theta);
  report.poincare = Vec(n_theta);
  report.bound = Vec(n_theta);
  const double c_unit = poincare_constant(Distribution::uniform(-1.0, 1.0));
  std::vector<double> g2(kept_values.size());
  for (int i = 0; i < n_theta; ++i) {
    for (std::size_t k = 0; k < kept_index.size(); ++k) {
      const double g = grads(kept_index[k], i);
      g2[k] = g * g;
    }
    report.dgsm(i) = pairwise_sum(g2) / n_kept;
    report.poincare(i) = c_unit;
    report.bound(i) = c_unit * report.dgsm(i) / variance;
  }

  // Sampling error of each bound from contiguous batches.
  const int n_batches = std::min(10, n_kept / 2);
  report.bound_std_err = Vec::Zero(n_theta);
  if (n_batches >= 2) {
    const int len = n_kept / n_batches;
    for (int i = 0; i < n_theta; ++i) {
      Vec batch(n_batches);
      for (int g = 0; g < n_batches; ++g) {
        double vsum = 0.0, vsq = 0.0, gsq = 0.0;
        for (int k = g * len; k < (g + 1) * len; ++k) {
          vsum += kept_values[static_cast<std::size_t>(k)];
          const double gv = grads(kept_index[static_cast<std::size_t>(k)], i);
          gsq += gv * gv;
        }
        const double bmean = vsum / len;
        for (int k = g * len; k < (g + 1) * len; ++k) {
          const double d = kept_values[static_cast<std::size_t>(k)] - bmean;
          vsq += d * d;
        }
        const double bvar = vsq / (len - 1.0);
        batch(g) = bvar > 1e-14 ? c_unit * (gsq / len) / bvar : report.bound(i);
      }
      const double mean_b = batch.mean();
      report.bound_std_err(i) =
          std::sqrt((batch.array() - mean_b).square().sum() / (n_batches - 1.0) / n_batches);
    }
  }
  return report;
}

// Information-gain specialization: each sample maps the unit draw through the
// perturbation parameterization, runs the value-and-gradient evaluation on a
// private clone of the inverse problem (observation data fixed across the
// study), and remaps the gradient to theta coordinates.
inline DgsmReport dgsm_bound(const InverseProblem& ip, const std::vector<std::string>& names,
                             const PerturbationMap& pmap, int rank, int oversample,
                             std::uint64_t eig_seed, int n_samples, std::uint64_t seed,
                             FailurePolicy policy = FailurePolicy::Abort) {
  const Mat box = pmap.physical_box();
  auto fn = [&](const Vec& theta_unit, int) -> std::pair<double, Vec> {
    const InverseProblem worker = ip.clone_for_worker();
    const ThetaVector theta =
        ThetaVector::make(pmap.to_physical(theta_unit), names, pmap.nominal, box);
    const SensitivityReport rep = info_gain_gradient(worker, theta, rank, oversample, eig_seed);
    return {rep.phi_ig, pmap.remap_gradient(rep.grad_phi_ig)};
  };
  DgsmReport report = dgsm_bound_fn(fn, pmap.size(), n_samples, seed, policy);
  report.names = names;
  return report;
}

}  // namespace igsense
