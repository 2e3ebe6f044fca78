#pragma once

// Gaussian prior N(m_prior, C_prior) with covariance the squared inverse of a
// discretized (I - Laplace) operator: with R the stiffness-plus-mass matrix
// and M the mass matrix,
//
//   C_prior      = R^{-1} M R^{-1}        (dual -> primal),
//   C_prior^{-1} = R M^{-1} R             (primal -> dual),
//
// so covariance applies need two R-solves and precision applies one mass
// solve; no operator square root is ever formed. The Cameron-Martin inner
// product is <x, y> = x' R M^{-1} R y.

#include <memory>

#include <Eigen/SparseCholesky>

#include "igsense/cg.hpp"
#include "igsense/core.hpp"
#include "igsense/fem.hpp"

namespace igsense {

enum class MassInverse { Cg, Lumped };

class GaussianPrior {
 public:
  GaussianPrior(SpMat k_op, SpMat mass, Vec mean, MassInverse mass_mode = MassInverse::Cg)
      : k_op_(std::make_shared<SpMat>(std::move(k_op))),
        mass_(std::make_shared<SpMat>(std::move(mass))),
        mean_(std::move(mean)),
        mass_mode_(mass_mode) {
    if (k_op_->rows() != k_op_->cols() || mass_->rows() != mass_->cols() ||
        k_op_->rows() != mass_->rows() || mean_.size() != k_op_->rows())
      throw DimensionMismatch("GaussianPrior: inconsistent operator dimensions");
    auto solver = std::make_shared<Eigen::SimplicialLDLT<SpMat>>();
    solver->compute(*k_op_);
    if (solver->info() != Eigen::Success)
      throw SingularOperator("GaussianPrior: factorization of the precision root failed");
    k_solver_ = std::move(solver);
    lumped_ = std::make_shared<Vec>(*mass_ * Vec::Ones(mass_->rows()));
    mass_op_ = LinearOperatorHandle{
        [m = mass_](const Vec& v) -> Vec { return *m * v; }, Space::Parameter, Space::Parameter,
        mass_->rows(), mass_->rows(), true};
  }

  // Identity covariance on R^dim; the finite-dimensional analytic setting.
  static GaussianPrior identity(Eigen::Index dim) {
    SpMat eye(dim, dim);
    eye.setIdentity();
    return GaussianPrior(eye, eye, Vec::Zero(dim));
  }

  // C_prior = (I - Laplace)^{-2} in the Galerkin sense on the given P1 space.
  static GaussianPrior bilaplacian(const P1Assembly& assembly, Vec mean,
                                   MassInverse mass_mode = MassInverse::Cg) {
    SpMat r = assembly.mass + assembly.stiffness;
    return GaussianPrior(std::move(r), assembly.mass, std::move(mean), mass_mode);
  }

  Eigen::Index dim() const { return k_op_->rows(); }
  const Vec& mean() const { return mean_; }
  const SpMat& k_op() const { return *k_op_; }
  const SpMat& mass() const { return *mass_; }

  // C_prior v = R^{-1} M R^{-1} v (two R-solves, one mass apply).
  Vec apply_cov(const Vec& dual) const {
    check(dual, "apply_cov");
    Vec w = k_solver_->solve(dual);
    w = mass_apply(w);
    Vec out = k_solver_->solve(w);
    if (!all_finite(out)) throw SingularOperator("GaussianPrior::apply_cov produced non-finite values");
    return out;
  }

  // C_prior^{-1} v = R M^{-1} R v.
  Vec apply_precision(const Vec& v) const {
    check(v, "apply_precision");
    return *k_op_ * mass_solve(*k_op_ * v);
  }

  // Evaluated in a form that is symmetric under swapping x and y bitwise.
  double cm_inner(const Vec& x, const Vec& y) const {
    check(x, "cm_inner");
    check(y, "cm_inner");
    const Vec kx = *k_op_ * x;
    const Vec ky = *k_op_ * y;
    return 0.5 * (kx.dot(mass_solve(ky)) + ky.dot(mass_solve(kx)));
  }

  double cm_norm2(const Vec& x) const {
    check(x, "cm_norm2");
    const Vec kx = *k_op_ * x;
    return std::max(0.0, kx.dot(mass_solve(kx)));
  }

  InnerProduct cm_inner_product() const {
    return InnerProduct{[this](const Vec& v) { return apply_precision(v); }};
  }

  // Lumped mode swaps in the diagonal lumped mass everywhere, so covariance
  // and precision stay mutually inverse whichever mode is configured.
  Vec mass_apply(const Vec& v) const {
    if (mass_mode_ == MassInverse::Lumped) return lumped_->cwiseProduct(v);
    return *mass_ * v;
  }

  Vec mass_solve(const Vec& rhs) const {
    if (mass_mode_ == MassInverse::Lumped) return rhs.cwiseQuotient(*lumped_);
    return cg_solve(mass_op_, rhs, /*rel_tol=*/1e-12, /*max_iter=*/1000);
  }

 private:
  void check(const Vec& v, const char* who) const {
    if (v.size() != dim())
      throw DimensionMismatch(std::string("GaussianPrior::") + who + ": vector length " +
                              std::to_string(v.size()) + ", expected " + std::to_string(dim()));
  }

  std::shared_ptr<const SpMat> k_op_;
  std::shared_ptr<const SpMat> mass_;
  Vec mean_;
  MassInverse mass_mode_;
  std::shared_ptr<const Eigen::SimplicialLDLT<SpMat>> k_solver_;
  std::shared_ptr<const Vec> lumped_;
  LinearOperatorHandle mass_op_;
};

}  // namespace igsense
