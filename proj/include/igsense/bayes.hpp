#pragma once

// Linear Gaussian inference core: data-misfit Hessian actions, the low-rank
// generalized spectrum of (H_misfit, C_prior^{-1}), MAP point, posterior
// covariance (inverse Hessian) application, and the information gain and its
// expectation over data.
//
// With B-orthonormal eigenpairs (gamma_i, psi_i) of the pencil, the inverse
// of the full Hessian H = H_misfit + C_prior^{-1} acting on a dual vector z
// is exactly
//
//   H^{-1} z = C_prior z - sum_i gamma_i/(1+gamma_i) psi_i (psi_i' z)
//
// once every nonzero eigenvalue is retained, and the information gain
// surrogate is
//
//   Phi_IG = 1/2 [ sum log(1+gamma_i) - sum gamma_i/(1+gamma_i)
//                  + |m_post - m_prior|^2_{C_prior^{-1}} ].

#include <memory>
#include <optional>
#include <utility>

#include "igsense/core.hpp"
#include "igsense/model.hpp"
#include "igsense/prior.hpp"
#include "igsense/randeig.hpp"

namespace igsense {

struct InverseProblem {
  std::shared_ptr<const ForwardModel> model;
  std::shared_ptr<const GaussianPrior> prior;
  ObservationData data;
  std::shared_ptr<SolveCounter> counter = std::make_shared<SolveCounter>();

  void validate() const {
    data.validate();
    if (!model || !prior) throw ConfigError("InverseProblem: model and prior are required");
    if (prior->dim() != model->parameter_dim())
      throw DimensionMismatch("InverseProblem: prior dimension does not match parameter space");
    if (data.n_obs() != model->n_obs())
      throw DimensionMismatch("InverseProblem: data length does not match observation operator");
  }

  // Same problem, private model internals; prior, data and counter shared.
  InverseProblem clone_for_worker() const {
    InverseProblem c = *this;
    c.model = model->clone();
    return c;
  }
};

// Data-misfit Hessian action on a parameter direction: one incremental state
// and one incremental adjoint solve, returning the dual vector C' p_hat.
inline Vec misfit_hessian_apply(const InverseProblem& ip, const Vec& mhat,
                                const ThetaVector& theta) {
  const Vec uh = solve_incremental_state(*ip.model, mhat, theta, *ip.counter);
  const Vec ph = solve_incremental_adjoint(*ip.model, uh, ip.data, theta, *ip.counter);
  return ip.model->c_apply_transpose(ph, theta);
}

// Records the incremental pairs produced by misfit Hessian applies so callers
// can recombine them instead of re-solving.
struct IncrementalPairLog {
  std::vector<Vec> uhat;
  std::vector<Vec> phat;
};

inline LinearOperatorHandle misfit_hessian_operator(const InverseProblem& ip,
                                                    const ThetaVector& theta,
                                                    IncrementalPairLog* log = nullptr) {
  const Eigen::Index n = ip.model->parameter_dim();
  return LinearOperatorHandle{
      [&ip, theta, log](const Vec& mhat) -> Vec {
        const Vec uh = solve_incremental_state(*ip.model, mhat, theta, *ip.counter);
        const Vec ph = solve_incremental_adjoint(*ip.model, uh, ip.data, theta, *ip.counter);
        if (log) {
          log->uhat.push_back(uh);
          log->phat.push_back(ph);
        }
        return ip.model->c_apply_transpose(ph, theta);
      },
      Space::Parameter, Space::Dual, n, n, true};
}

inline LinearOperatorHandle prior_precision_operator(const InverseProblem& ip) {
  const Eigen::Index n = ip.prior->dim();
  return LinearOperatorHandle{[p = ip.prior](const Vec& v) { return p->apply_precision(v); },
                              Space::Parameter, Space::Dual, n, n, true};
}

inline LinearOperatorHandle prior_covariance_operator(const InverseProblem& ip) {
  const Eigen::Index n = ip.prior->dim();
  return LinearOperatorHandle{[p = ip.prior](const Vec& v) { return p->apply_cov(v); },
                              Space::Dual, Space::Parameter, n, n, true};
}

// Spectrum plus the incremental state/adjoint pair driven by each retained
// eigenvector. The pairs fall out of the decomposition itself (recombinations
// of solves already performed), so derivative work needs no further solves.
struct SpectrumWithPairs {
  LowRankSpectrum spectrum;
  Mat uhat;  // state_dim x rank
  Mat phat;  // state_dim x rank
  bool pairs_valid = false;
};

namespace detail {

// Exact decomposition through the observation space, for r >= N_obs. The
// misfit Hessian has rank at most N_obs; the N_obs x N_obs symmetric matrix
//   T = Gamma^{-1/2} G C_prior G' Gamma^{-1/2}
// carries the full generalized spectrum, and costs one incremental adjoint
// plus one incremental state solve per observation to assemble. Eigenvectors
// lift back as psi = C_prior G' Gamma^{-1/2} v / sqrt(gamma), and the
// incremental pairs of all retained modes are linear combinations of the
// assembly solves.
inline SpectrumWithPairs spectrum_observation_basis(const InverseProblem& ip,
                                                    const ThetaVector& theta, int rank) {
  const ForwardModel& model = *ip.model;
  const int nobs = model.n_obs();
  const Eigen::Index nstate = model.state_dim();
  const Vec root_var = ip.data.noise_var.cwiseSqrt();

  Mat z(nstate, nobs);      // adjoint-type solves per observation direction
  Mat cols(ip.prior->dim(), nobs);  // C_prior G' Gamma^{-1/2} e_k
  Mat uhat(nstate, nobs);
  Mat t(nobs, nobs);
  for (int k = 0; k < nobs; ++k) {
    Vec w = Vec::Zero(nobs);
    w(k) = 1.0 / root_var(k);
    z.col(k) = solve_incremental_adjoint_weighted(model, w, theta, *ip.counter);
    const Vec g = model.c_apply_transpose(z.col(k), theta);
    cols.col(k) = ip.prior->apply_cov(g);
    uhat.col(k) = solve_incremental_state(model, cols.col(k), theta, *ip.counter);
    t.col(k) = model.observe(uhat.col(k)).cwiseQuotient(root_var);
  }
  const Mat phat = z * t;  // incremental adjoints of the assembly directions
  const Mat t_sym = 0.5 * (t + t.transpose());

  Eigen::SelfAdjointEigenSolver<Mat> es(t_sym);
  if (es.info() != Eigen::Success)
    throw SingularOperator("lowrank_spectrum: observation-space eigenproblem failed");

  std::vector<Eigen::Index> order;
  for (Eigen::Index j = nobs - 1; j >= 0 && static_cast<int>(order.size()) < rank; --j)
    if (es.eigenvalues()(j) > kEigenvalueFloor) order.push_back(j);

  const Eigen::Index kept = static_cast<Eigen::Index>(order.size());
  Mat combine(nobs, kept);  // columns v_i / sqrt(gamma_i), sign-normalized
  Vec gammas(kept);
  for (Eigen::Index i = 0; i < kept; ++i) {
    gammas(i) = es.eigenvalues()(order[static_cast<std::size_t>(i)]);
    combine.col(i) =
        es.eigenvectors().col(order[static_cast<std::size_t>(i)]) / std::sqrt(gammas(i));
  }
  Mat psis = cols * combine;
  for (Eigen::Index i = 0; i < kept; ++i) {
    Eigen::Index imax = 0;
    psis.col(i).cwiseAbs().maxCoeff(&imax);
    if (psis(imax, i) < 0.0) {
      psis.col(i) *= -1.0;
      combine.col(i) *= -1.0;
    }
  }

  SpectrumWithPairs out;
  out.spectrum.gammas = std::move(gammas);
  out.spectrum.psis = std::move(psis);
  out.spectrum.requested_rank = rank;
  out.spectrum.rank_deficient = static_cast<int>(kept) < rank;
  out.spectrum.repeated_eigenvalues = has_repeated_eigenvalues(out.spectrum.gammas);
  out.spectrum.theta_at = theta.values;
  out.uhat = uhat * combine;
  out.phat = phat * combine;
  out.pairs_valid = true;
  return out;
}

}  // namespace detail

// Low-rank generalized spectrum of (H_misfit, C_prior^{-1}) at theta. For
// r >= N_obs the decomposition is assembled exactly through the observation
// space in 2 N_obs incremental solves; otherwise the randomized double-pass
// eigensolver runs with the given oversampling, and the second-pass operator
// applies are recycled as the per-mode incremental pairs.
inline SpectrumWithPairs lowrank_spectrum_with_pairs(const InverseProblem& ip,
                                                     const ThetaVector& theta, int rank,
                                                     int oversample, std::uint64_t seed) {
  ip.validate();
  detail::check_theta(*ip.model, theta, "lowrank_spectrum");
  if (rank < 0) throw std::invalid_argument("lowrank_spectrum: rank must be nonnegative");

  if (rank >= ip.model->n_obs()) return detail::spectrum_observation_basis(ip, theta, rank);

  IncrementalPairLog log;
  const LinearOperatorHandle a = misfit_hessian_operator(ip, theta, &log);
  const LinearOperatorHandle b = prior_precision_operator(ip);
  const LinearOperatorHandle b_inv = prior_covariance_operator(ip);
  GeneralizedEigDetail detail_out;
  LowRankSpectrum spec = eig_lowrank_generalized(a, b, b_inv, rank, oversample, seed, &detail_out);
  spec.theta_at = theta.values;

  SpectrumWithPairs out;
  out.spectrum = std::move(spec);
  const int first = detail_out.pass1_applies;
  const int count = detail_out.pass2_applies;
  if (static_cast<int>(log.uhat.size()) == first + count && count > 0) {
    Mat uq(ip.model->state_dim(), count), pq(ip.model->state_dim(), count);
    for (int k = 0; k < count; ++k) {
      uq.col(k) = log.uhat[static_cast<std::size_t>(first + k)];
      pq.col(k) = log.phat[static_cast<std::size_t>(first + k)];
    }
    out.uhat = uq * detail_out.small_vectors;
    out.phat = pq * detail_out.small_vectors;
    out.pairs_valid = true;
  }
  return out;
}

inline LowRankSpectrum lowrank_spectrum(const InverseProblem& ip, const ThetaVector& theta,
                                        int rank, int oversample, std::uint64_t seed) {
  return lowrank_spectrum_with_pairs(ip, theta, rank, oversample, seed).spectrum;
}

// Posterior covariance action on a dual vector (exact once all nonzero
// eigenvalues are retained). Requires no PDE solves.
inline Vec apply_inverse_hessian(const LowRankSpectrum& spec, const GaussianPrior& prior,
                                 const Vec& z) {
  Vec out = prior.apply_cov(z);
  if (spec.rank() > 0) {
    const Vec coeff =
        (spec.gammas.array() / (1.0 + spec.gammas.array())).matrix().cwiseProduct(
            spec.psis.transpose() * z);
    out -= spec.psis * coeff;
  }
  return out;
}

namespace detail {

inline void require_spectrum_at(const LowRankSpectrum& spec, const ThetaVector& theta,
                                const char* who) {
  if (spec.theta_at.size() != theta.values.size() ||
      (spec.theta_at.array() != theta.values.array()).any())
    throw std::invalid_argument(std::string(who) +
                                ": spectrum was computed at different auxiliary parameters");
}

}  // namespace detail

// MAP point: m_post = H^{-1} [ G' Gamma^{-1} (u_obs - f) + C_prior^{-1} m_prior ]
// where f = Q u(0; theta) is the affine part of the parameter-to-observable
// map. One state solve for f, one adjoint-type solve for the G' application.
inline Vec map_point(const InverseProblem& ip, const LowRankSpectrum& spec,
                     const ThetaVector& theta) {
  detail::require_spectrum_at(spec, theta, "map_point");
  const ForwardModel& model = *ip.model;
  const Vec f = model.observe(solve_state(model, Vec::Zero(model.parameter_dim()), theta,
                                          *ip.counter));
  const Vec w = (ip.data.u_obs - f).cwiseQuotient(ip.data.noise_var);
  const Vec z = solve_incremental_adjoint_weighted(model, w, theta, *ip.counter);
  Vec rhs = model.c_apply_transpose(z, theta);
  if ((ip.prior->mean().array() != 0.0).any()) rhs += ip.prior->apply_precision(ip.prior->mean());
  return apply_inverse_hessian(spec, *ip.prior, rhs);
}

// Information gain (KL divergence from posterior to prior) evaluated through
// the retained spectrum and the MAP point.
inline double information_gain(const InverseProblem& ip, const LowRankSpectrum& spec,
                               const Vec& m_post) {
  double spectral = 0.0;
  for (Eigen::Index i = 0; i < spec.gammas.size(); ++i) {
    const double g = spec.gammas(i);
    spectral += std::log1p(g) - g / (1.0 + g);
  }
  const double map_term = ip.prior->cm_norm2(m_post - ip.prior->mean());
  return 0.5 * (spectral + map_term);
}

// Expected information gain over data: 1/2 sum log(1 + gamma_i).
inline double expected_information_gain(const LowRankSpectrum& spec) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < spec.gammas.size(); ++i) s += std::log1p(spec.gammas(i));
  return 0.5 * s;
}

}  // namespace igsense
