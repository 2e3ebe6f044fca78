#pragma once

// Derivative engine for the information gain: adjoint-based eigenvalue
// sensitivities, post-optimal MAP sensitivities, and the assembled gradients
// of Phi_IG and Phi_IG_bar with respect to the auxiliary parameters.
//
// Spectral part. With (uhat_i, phat_i) the incremental pair driven by the
// eigenvector psi_i, the raw eigenvalue derivative is
//
//   d gamma_i / d theta_j = 2 [ c_dtheta_j(phat_i, psi_i) + a_dtheta_j(phat_i, uhat_i) ],
//
// and the Lagrange multipliers of the spectral objective are exact rescalings
// (uhat_i^*, phat_i^*) = gamma_i / (2 (1+gamma_i)^2) (uhat_i, phat_i), so no
// further solves are needed.
//
// MAP part. The mixed second derivative of the regularized objective at the
// MAP point is assembled per parameter from one incremental-state-shaped and
// one incremental-adjoint-shaped solve:
//
//   S du = -(A_j u + C_j m_post + d_j),     S' dp = -(Q' Gamma^{-1} Q du + A_j' p),
//   B_j  = C_j' p + C' dp,
//
// and d m_post / d theta_j = -H^{-1} B_j through the retained spectrum.

#include <string>
#include <vector>

#include "igsense/bayes.hpp"
#include "igsense/core.hpp"
#include "igsense/model.hpp"

namespace igsense {

struct EigenSensitivityWorkspace {
  LowRankSpectrum spectrum;
  Mat uhat;              // incremental states, one column per retained mode
  Mat phat;              // incremental adjoints
  Vec multiplier_scale;  // gamma_i / (2 (1+gamma_i)^2)

  int rank() const { return spectrum.rank(); }
  Vec uhat_star(int i) const { return multiplier_scale(i) * uhat.col(i); }
  Vec phat_star(int i) const { return multiplier_scale(i) * phat.col(i); }
};

inline EigenSensitivityWorkspace build_eigen_workspace(const InverseProblem& ip,
                                                       const SpectrumWithPairs& sp,
                                                       const ThetaVector& theta) {
  EigenSensitivityWorkspace ws;
  ws.spectrum = sp.spectrum;
  if (sp.pairs_valid) {
    ws.uhat = sp.uhat;
    ws.phat = sp.phat;
  } else {
    const int r = sp.spectrum.rank();
    ws.uhat.resize(ip.model->state_dim(), r);
    ws.phat.resize(ip.model->state_dim(), r);
    for (int i = 0; i < r; ++i) {
      ws.uhat.col(i) = solve_incremental_state(*ip.model, sp.spectrum.psis.col(i), theta,
                                               *ip.counter);
      ws.phat.col(i) =
          solve_incremental_adjoint(*ip.model, ws.uhat.col(i), ip.data, theta, *ip.counter);
    }
  }
  ws.multiplier_scale = Vec(ws.spectrum.rank());
  for (int i = 0; i < ws.spectrum.rank(); ++i) {
    const double g = ws.spectrum.gammas(i);
    ws.multiplier_scale(i) = g / (2.0 * (1.0 + g) * (1.0 + g));
  }
  return ws;
}

// Raw derivative of the i-th retained eigenvalue with respect to theta_j.
inline double eigenvalue_derivative(const ForwardModel& model,
                                    const EigenSensitivityWorkspace& ws, int i, int j,
                                    const ThetaVector& theta) {
  if (i < 0 || i >= ws.rank())
    throw IndexOutOfRange("eigenvalue_derivative: mode " + std::to_string(i));
  return 2.0 * (model.c_form_dtheta(j, ws.phat.col(i), ws.spectrum.psis.col(i), theta) +
                model.a_form_dtheta(j, ws.phat.col(i), ws.uhat.col(i), theta));
}

// Gradient of the spectral part of the information gain,
// Phi^gamma = 1/2 sum_i [ log(1+gamma_i) - gamma_i/(1+gamma_i) ],
// assembled from the four theta-partial forms with the stored multipliers.
// Zero PDE solves beyond the pairs already in the workspace.
inline Vec spectral_gradient(const ForwardModel& model, const EigenSensitivityWorkspace& ws,
                             const ThetaVector& theta) {
  Vec grad = Vec::Zero(theta.size());
  for (int i = 0; i < ws.rank(); ++i) {
    const double w = ws.multiplier_scale(i);
    const Vec psi = ws.spectrum.psis.col(i);
    const Vec uh = ws.uhat.col(i);
    const Vec ph = ws.phat.col(i);
    const Vec uh_star = w * uh;
    const Vec ph_star = w * ph;
    for (int j = 0; j < theta.size(); ++j) {
      grad(j) += w * model.c_form_dtheta(j, ph, psi, theta) +
                 model.a_form_dtheta(j, ph_star, uh, theta) +
                 model.c_form_dtheta(j, ph_star, psi, theta) +
                 model.a_form_dtheta(j, ph, uh_star, theta);
    }
  }
  return grad;
}

// Gradient of the expected information gain 1/2 sum log(1+gamma_i): chain
// rule weights 1/(2(1+gamma_i)) on the raw eigenvalue derivatives.
inline Vec expected_ig_gradient(const ForwardModel& model, const EigenSensitivityWorkspace& ws,
                                const ThetaVector& theta) {
  Vec grad = Vec::Zero(theta.size());
  for (int i = 0; i < ws.rank(); ++i) {
    const double weight = 1.0 / (2.0 * (1.0 + ws.spectrum.gammas(i)));
    for (int j = 0; j < theta.size(); ++j)
      grad(j) += weight * eigenvalue_derivative(model, ws, i, j, theta);
  }
  return grad;
}

// Dual vector B_j representing the theta_j-derivative of the objective
// gradient at the MAP point; (u, p) are the state/adjoint pair at m_post.
// Costs one incremental-state-shaped and one incremental-adjoint-shaped solve.
inline Vec assemble_Bj(const InverseProblem& ip, const ThetaVector& theta, int j, const Vec& u,
                       const Vec& p, const Vec& m_post) {
  const ForwardModel& model = *ip.model;
  if (j < 0 || j >= theta.size())
    throw IndexOutOfRange("assemble_Bj: theta index " + std::to_string(j));

  const Vec rhs_state = -(model.a_dtheta_apply(j, u, theta) + model.c_dtheta_apply(j, m_post, theta) +
                          model.d_dtheta_vector(j, theta));
  const Vec du = model.state_op_solve(rhs_state, theta);
  ip.counter->bump_incremental_state();
  if (!all_finite(du)) throw SingularOperator("assemble_Bj: state-shaped solve failed");

  const Vec w = model.observe(du).cwiseQuotient(ip.data.noise_var);
  const Vec rhs_adj = -(model.observe_adjoint(w) + model.a_dtheta_apply_transpose(j, p, theta));
  const Vec dp = model.state_op_solve_transpose(rhs_adj, theta);
  ip.counter->bump_incremental_adjoint();
  if (!all_finite(dp)) throw SingularOperator("assemble_Bj: adjoint-shaped solve failed");

  return model.c_dtheta_apply_transpose(j, p, theta) + model.c_apply_transpose(dp, theta);
}

// Post-optimal sensitivity of the MAP point: d m_post / d theta_j = -H^{-1} B_j.
inline Vec map_sensitivity(const LowRankSpectrum& spec, const GaussianPrior& prior,
                           const Vec& b_j) {
  return -apply_inverse_hessian(spec, prior, b_j);
}

struct SensitivityReport {
  ThetaVector theta;
  double phi_ig = 0.0;
  double phi_ig_bar = 0.0;
  Vec grad_phi_ig;
  Vec grad_phi_ig_bar;
  SolveCounts solve_counts;          // delta for this evaluation
  int rank = 0;
  bool rank_deficient = false;
  bool repeated_eigenvalues = false;  // eigenvalue derivatives unreliable if set
  double spectrum_tail_ratio = 0.0;   // gamma_r / gamma_1 diagnostic
};

// Value-and-gradient evaluation of the information gain and its expectation
// at theta: spectrum, MAP point, eigenvalue sensitivities, and post-optimal
// MAP sensitivities, with solve accounting.
inline SensitivityReport info_gain_gradient(const InverseProblem& ip, const ThetaVector& theta,
                                            int rank, int oversample, std::uint64_t seed) {
  ip.validate();
  const SolveCounts before = ip.counter->snapshot();
  const ForwardModel& model = *ip.model;

  const SpectrumWithPairs sp = lowrank_spectrum_with_pairs(ip, theta, rank, oversample, seed);
  const Vec m_post = map_point(ip, sp.spectrum, theta);

  SensitivityReport report;
  report.theta = theta;
  report.phi_ig = information_gain(ip, sp.spectrum, m_post);
  report.phi_ig_bar = expected_information_gain(sp.spectrum);

  const EigenSensitivityWorkspace ws = build_eigen_workspace(ip, sp, theta);
  report.grad_phi_ig = spectral_gradient(model, ws, theta);
  report.grad_phi_ig_bar = expected_ig_gradient(model, ws, theta);

  // MAP-term derivative: state/adjoint pair at the MAP point, then one B_j
  // per parameter contracted against the posterior covariance.
  const Vec u = solve_state(model, m_post, theta, *ip.counter);
  const Vec p = solve_adjoint(model, u, ip.data, theta, *ip.counter);
  const Vec m_centered = m_post - ip.prior->mean();
  for (int j = 0; j < theta.size(); ++j) {
    const Vec b_j = assemble_Bj(ip, theta, j, u, p, m_post);
    const Vec dm_j = map_sensitivity(sp.spectrum, *ip.prior, b_j);
    report.grad_phi_ig(j) += ip.prior->cm_inner(m_centered, dm_j);
  }

  report.solve_counts = ip.counter->snapshot() - before;
  report.rank = sp.spectrum.rank();
  report.rank_deficient = sp.spectrum.rank_deficient;
  report.repeated_eigenvalues = sp.spectrum.repeated_eigenvalues;
  report.spectrum_tail_ratio =
      sp.spectrum.rank() > 0 ? sp.spectrum.gammas(sp.spectrum.rank() - 1) / sp.spectrum.gammas(0)
                             : 0.0;
  return report;
}

}  // namespace igsense
