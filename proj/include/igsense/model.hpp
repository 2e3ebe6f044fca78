#pragma once

// Abstract contract for affine-in-m forward problems given in the weak form
//   a(p, u; theta) + c(p, m; theta) + d(p; theta) = 0   for all test p,
// plus the four canonical solves (state, adjoint, incremental state,
// incremental adjoint). Models expose the assembled theta-frozen operators
// and their transposes; everything downstream is written against those.

#include <memory>
#include <string>
#include <vector>

#include "igsense/core.hpp"

namespace igsense {

// ---------------------------------------------------------------------------
// Auxiliary parameters
// ---------------------------------------------------------------------------

struct ThetaVector {
  Vec values;
  std::vector<std::string> names;
  Vec nominal;
  Mat box;  // n_theta x 2, per-entry [lo, hi]

  int size() const { return static_cast<int>(values.size()); }

  bool in_box() const {
    for (Eigen::Index j = 0; j < values.size(); ++j)
      if (values(j) < box(j, 0) || values(j) > box(j, 1)) return false;
    return true;
  }

  ThetaVector with_value(int j, double v) const {
    ThetaVector out = *this;
    out.values(j) = v;
    return out;
  }

  int index_of(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return static_cast<int>(j);
    throw IndexOutOfRange("unknown auxiliary parameter '" + name + "'");
  }

  void validate() const {
    const Eigen::Index n = values.size();
    if (nominal.size() != n || static_cast<Eigen::Index>(names.size()) != n ||
        box.rows() != n || box.cols() != 2)
      throw DimensionMismatch("ThetaVector: inconsistent field lengths");
    for (Eigen::Index j = 0; j < n; ++j)
      if (!(box(j, 0) <= box(j, 1)))
        throw ConfigError("ThetaVector: empty box for parameter " + names[j]);
    for (std::size_t a = 0; a < names.size(); ++a)
      for (std::size_t b = a + 1; b < names.size(); ++b)
        if (names[a] == names[b]) throw ConfigError("ThetaVector: duplicate name " + names[a]);
  }

  static ThetaVector make(Vec values, std::vector<std::string> names, Vec nominal, Mat box) {
    ThetaVector t{std::move(values), std::move(names), std::move(nominal), std::move(box)};
    t.validate();
    return t;
  }
};

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

struct ObservationData {
  Vec u_obs;
  Vec noise_var;  // diagonal of Gamma_noise, all > 0

  int n_obs() const { return static_cast<int>(u_obs.size()); }

  void validate() const {
    if (noise_var.size() != u_obs.size())
      throw DimensionMismatch("ObservationData: noise diagonal length mismatch");
    if ((noise_var.array() <= 0.0).any())
      throw ConfigError("ObservationData: noise variances must be positive");
  }
};

// ---------------------------------------------------------------------------
// Forward model contract
// ---------------------------------------------------------------------------

class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  virtual int state_dim() const = 0;
  virtual int parameter_dim() const = 0;
  virtual int n_obs() const = 0;
  virtual int n_theta() const = 0;

  // Clone with private mutable internals (factorization caches); the heavy
  // immutable pieces may be shared.
  virtual std::shared_ptr<ForwardModel> clone() const = 0;

  // theta-frozen state operator S (p' S u = a(p, u; theta)) and its transpose.
  virtual Vec state_op_apply(const Vec& u, const ThetaVector& theta) const = 0;
  virtual Vec state_op_apply_transpose(const Vec& p, const ThetaVector& theta) const = 0;
  virtual Vec state_op_solve(const Vec& rhs, const ThetaVector& theta) const = 0;
  virtual Vec state_op_solve_transpose(const Vec& rhs, const ThetaVector& theta) const = 0;

  // c(p, m; theta) = p' (C m) and its transpose; d(p; theta) = p' d.
  virtual Vec c_apply(const Vec& m, const ThetaVector& theta) const = 0;
  virtual Vec c_apply_transpose(const Vec& p, const ThetaVector& theta) const = 0;
  virtual Vec d_vector(const ThetaVector& theta) const = 0;

  // Partial derivatives of the forms with respect to theta_j, as operators.
  virtual Vec a_dtheta_apply(int j, const Vec& u, const ThetaVector& theta) const = 0;
  virtual Vec a_dtheta_apply_transpose(int j, const Vec& p, const ThetaVector& theta) const = 0;
  virtual Vec c_dtheta_apply(int j, const Vec& m, const ThetaVector& theta) const = 0;
  virtual Vec c_dtheta_apply_transpose(int j, const Vec& p, const ThetaVector& theta) const = 0;
  virtual Vec d_dtheta_vector(int j, const ThetaVector& theta) const = 0;

  // Observation operator Q and its transpose.
  virtual Vec observe(const Vec& u) const = 0;
  virtual Vec observe_adjoint(const Vec& w) const = 0;

  // Scalar weak forms, derived from the operator actions.
  double a_form(const Vec& p, const Vec& u, const ThetaVector& theta) const {
    return p.dot(state_op_apply(u, theta));
  }
  double c_form(const Vec& p, const Vec& m, const ThetaVector& theta) const {
    return p.dot(c_apply(m, theta));
  }
  double d_form(const Vec& p, const ThetaVector& theta) const { return p.dot(d_vector(theta)); }
  double a_form_dtheta(int j, const Vec& p, const Vec& u, const ThetaVector& theta) const {
    return p.dot(a_dtheta_apply(j, u, theta));
  }
  double c_form_dtheta(int j, const Vec& p, const Vec& m, const ThetaVector& theta) const {
    return p.dot(c_dtheta_apply(j, m, theta));
  }
  double d_form_dtheta(int j, const Vec& p, const ThetaVector& theta) const {
    return p.dot(d_dtheta_vector(j, theta));
  }

  SpaceDims space_dims() const {
    SpaceDims dims;
    dims.set(Space::State, state_dim());
    dims.set(Space::Adjoint, state_dim());
    dims.set(Space::Parameter, parameter_dim());
    dims.set(Space::Dual, parameter_dim());
    dims.set(Space::Observation, n_obs());
    return dims;
  }

};

namespace detail {

inline void check_theta(const ForwardModel& model, const ThetaVector& theta, const char* who) {
  if (theta.size() < model.n_theta())
    throw DimensionMismatch(std::string(who) + ": expected at least " +
                            std::to_string(model.n_theta()) + " auxiliary parameters, got " +
                            std::to_string(theta.size()));
  if (!theta.in_box())
    throw std::domain_error(std::string(who) + ": auxiliary parameters outside the configured box");
}

inline void check_param(const ForwardModel& model, const Vec& m, const char* who) {
  if (m.size() != model.parameter_dim())
    throw DimensionMismatch(std::string(who) + ": parameter vector length " +
                            std::to_string(m.size()) + ", expected " +
                            std::to_string(model.parameter_dim()));
}

inline Vec checked_solution(Vec u, const char* who) {
  if (!all_finite(u)) throw SingularOperator(std::string(who) + ": solve produced non-finite values");
  return u;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Canonical solves (all counter bumps happen here)
// ---------------------------------------------------------------------------

// State: a(pt, u) + c(pt, m) + d(pt) = 0 for all pt  =>  S u = -(C m + d).
inline Vec solve_state(const ForwardModel& model, const Vec& m, const ThetaVector& theta,
                       SolveCounter& counter) {
  detail::check_theta(model, theta, "solve_state");
  detail::check_param(model, m, "solve_state");
  const Vec rhs = -(model.c_apply(m, theta) + model.d_vector(theta));
  Vec u = model.state_op_solve(rhs, theta);
  counter.bump_state();
  return detail::checked_solution(std::move(u), "solve_state");
}

// Adjoint of the observation map: S' z = -Q' w. The full adjoint and the
// incremental adjoint are both of this shape, with different weights w.
inline Vec adjoint_of_observation(const ForwardModel& model, const Vec& w,
                                  const ThetaVector& theta) {
  return model.state_op_solve_transpose(-model.observe_adjoint(w), theta);
}

// Adjoint: <Qu - u_obs, Q ut>_{Gamma^{-1}} + a(p, ut) = 0 for all ut.
inline Vec solve_adjoint(const ForwardModel& model, const Vec& u, const ObservationData& data,
                         const ThetaVector& theta, SolveCounter& counter) {
  const Vec w = (model.observe(u) - data.u_obs).cwiseQuotient(data.noise_var);
  Vec p = adjoint_of_observation(model, w, theta);
  counter.bump_adjoint();
  return detail::checked_solution(std::move(p), "solve_adjoint");
}

// Incremental state: a(pt, uh) + c(pt, mh) = 0 for all pt.
inline Vec solve_incremental_state(const ForwardModel& model, const Vec& mhat,
                                   const ThetaVector& theta, SolveCounter& counter) {
  detail::check_theta(model, theta, "solve_incremental_state");
  detail::check_param(model, mhat, "solve_incremental_state");
  Vec uh = model.state_op_solve(-model.c_apply(mhat, theta), theta);
  counter.bump_incremental_state();
  return detail::checked_solution(std::move(uh), "solve_incremental_state");
}

// Incremental adjoint: <Q ut, Q uh>_{Gamma^{-1}} + a(ph, ut) = 0 for all ut.
inline Vec solve_incremental_adjoint(const ForwardModel& model, const Vec& uhat,
                                     const ObservationData& data, const ThetaVector& theta,
                                     SolveCounter& counter) {
  const Vec w = model.observe(uhat).cwiseQuotient(data.noise_var);
  Vec ph = adjoint_of_observation(model, w, theta);
  counter.bump_incremental_adjoint();
  return detail::checked_solution(std::move(ph), "solve_incremental_adjoint");
}

// Incremental-adjoint-shaped solve against an arbitrary observation-space
// weight; used for applying the transpose of the parameter-to-observable map.
inline Vec solve_incremental_adjoint_weighted(const ForwardModel& model, const Vec& w,
                                              const ThetaVector& theta, SolveCounter& counter) {
  if (w.size() != model.n_obs())
    throw DimensionMismatch("solve_incremental_adjoint_weighted: observation length mismatch");
  Vec ph = adjoint_of_observation(model, w, theta);
  counter.bump_incremental_adjoint();
  return detail::checked_solution(std::move(ph), "solve_incremental_adjoint_weighted");
}

}  // namespace igsense
