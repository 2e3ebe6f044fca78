#pragma once

// Shared test helpers: random SPD builders, dense assemblies of model
// operators from their public actions, and probe-based checks for linearity
// and symmetry.

#include <catch2/catch_amalgamated.hpp>

#include "igsense/core.hpp"
#include "igsense/model.hpp"
#include "igsense/rng.hpp"

namespace igsense_test {

using igsense::Mat;
using igsense::Vec;

inline Mat random_spd(Eigen::Index n, std::uint64_t seed, double shift = 0.0) {
  const Mat g = igsense::rng::gaussian_matrix(n, n, seed, 17);
  Mat a = g * g.transpose();
  a.diagonal().array() += (shift > 0.0 ? shift : static_cast<double>(n));
  return a;
}

inline Mat random_spsd_rank(Eigen::Index n, Eigen::Index rank, std::uint64_t seed) {
  const Mat w = igsense::rng::gaussian_matrix(n, rank, seed, 23);
  return w * w.transpose();
}

inline Vec random_vec(Eigen::Index n, std::uint64_t seed, std::uint64_t stream = 29) {
  return igsense::rng::gaussian_vector(n, seed, stream);
}

// Dense state operator assembled column-by-column from the public action.
inline Mat dense_state_operator(const igsense::ForwardModel& model,
                                const igsense::ThetaVector& theta) {
  const Eigen::Index n = model.state_dim();
  Mat s(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Vec e = Vec::Zero(n);
    e(k) = 1.0;
    s.col(k) = model.state_op_apply(e, theta);
  }
  return s;
}

inline Mat dense_observation_operator(const igsense::ForwardModel& model) {
  const Eigen::Index n = model.state_dim();
  Mat q(model.n_obs(), n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Vec e = Vec::Zero(n);
    e(k) = 1.0;
    q.col(k) = model.observe(e);
  }
  return q;
}

// Two-point linearity probe: f(a x + b y) == a f(x) + b f(y) up to rel_tol.
inline double linearity_defect(const std::function<Vec(const Vec&)>& f, Eigen::Index dim,
                               std::uint64_t seed) {
  const Vec x = random_vec(dim, seed, 101);
  const Vec y = random_vec(dim, seed, 102);
  const double a = igsense::rng::uniform(seed, 103, 0, -2.0, 2.0);
  const double b = igsense::rng::uniform(seed, 103, 1, -2.0, 2.0);
  const Vec lhs = f(a * x + b * y);
  const Vec rhs = a * f(x) + b * f(y);
  const double scale = std::max(1.0, std::max(lhs.norm(), rhs.norm()));
  return (lhs - rhs).norm() / scale;
}

inline double relative_diff(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double relative_err(const Vec& got, const Vec& want) {
  return (got - want).norm() / std::max(1.0, want.norm());
}

// Wraps a model with one extra trailing auxiliary parameter that appears in
// no form; sensitivities with respect to it must come out exactly zero.
class WithSpectatorParameter : public igsense::ForwardModel {
 public:
  explicit WithSpectatorParameter(std::shared_ptr<const igsense::ForwardModel> base)
      : base_(std::move(base)) {}

  int state_dim() const override { return base_->state_dim(); }
  int parameter_dim() const override { return base_->parameter_dim(); }
  int n_obs() const override { return base_->n_obs(); }
  int n_theta() const override { return base_->n_theta() + 1; }

  std::shared_ptr<igsense::ForwardModel> clone() const override {
    return std::make_shared<WithSpectatorParameter>(base_->clone());
  }

  Vec state_op_apply(const Vec& u, const igsense::ThetaVector& t) const override {
    return base_->state_op_apply(u, t);
  }
  Vec state_op_apply_transpose(const Vec& p, const igsense::ThetaVector& t) const override {
    return base_->state_op_apply_transpose(p, t);
  }
  Vec state_op_solve(const Vec& rhs, const igsense::ThetaVector& t) const override {
    return base_->state_op_solve(rhs, t);
  }
  Vec state_op_solve_transpose(const Vec& rhs, const igsense::ThetaVector& t) const override {
    return base_->state_op_solve_transpose(rhs, t);
  }
  Vec c_apply(const Vec& m, const igsense::ThetaVector& t) const override {
    return base_->c_apply(m, t);
  }
  Vec c_apply_transpose(const Vec& p, const igsense::ThetaVector& t) const override {
    return base_->c_apply_transpose(p, t);
  }
  Vec d_vector(const igsense::ThetaVector& t) const override { return base_->d_vector(t); }

  Vec a_dtheta_apply(int j, const Vec& u, const igsense::ThetaVector& t) const override {
    if (j == base_->n_theta()) return Vec::Zero(u.size());
    return base_->a_dtheta_apply(j, u, t);
  }
  Vec a_dtheta_apply_transpose(int j, const Vec& p, const igsense::ThetaVector& t) const override {
    if (j == base_->n_theta()) return Vec::Zero(p.size());
    return base_->a_dtheta_apply_transpose(j, p, t);
  }
  Vec c_dtheta_apply(int j, const Vec& m, const igsense::ThetaVector& t) const override {
    if (j == base_->n_theta()) return Vec::Zero(m.size());
    return base_->c_dtheta_apply(j, m, t);
  }
  Vec c_dtheta_apply_transpose(int j, const Vec& p, const igsense::ThetaVector& t) const override {
    if (j == base_->n_theta()) return Vec::Zero(p.size());
    return base_->c_dtheta_apply_transpose(j, p, t);
  }
  Vec d_dtheta_vector(int j, const igsense::ThetaVector& t) const override {
    if (j == base_->n_theta()) return Vec::Zero(state_dim());
    return base_->d_dtheta_vector(j, t);
  }

  Vec observe(const Vec& u) const override { return base_->observe(u); }
  Vec observe_adjoint(const Vec& w) const override { return base_->observe_adjoint(w); }

 private:
  std::shared_ptr<const igsense::ForwardModel> base_;
};

inline igsense::ThetaVector append_spectator(const igsense::ThetaVector& theta, double value) {
  igsense::ThetaVector out;
  out.values = Vec(theta.size() + 1);
  out.values << theta.values, value;
  out.nominal = Vec(theta.size() + 1);
  out.nominal << theta.nominal, value;
  out.box = Mat(theta.size() + 1, 2);
  out.box.topRows(theta.size()) = theta.box;
  out.box.row(theta.size()) << value - 1.0, value + 1.0;
  out.names = theta.names;
  out.names.push_back("spare");
  return out;
}

}  // namespace igsense_test
