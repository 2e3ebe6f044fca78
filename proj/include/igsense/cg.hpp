#pragma once

// Conjugate gradients for matrix-free operators that are self-adjoint and
// positive definite in a declared inner product. All dot products are taken
// in that inner product, so the residual criterion matches the norm the
// caller actually cares about.

#include <algorithm>
#include <optional>

#include "igsense/core.hpp"

namespace igsense {

struct CgInfo {
  int iterations = 0;
  double relative_residual = 0.0;
};

inline Vec cg_solve(const LinearOperatorHandle& op, const Vec& rhs, double rel_tol, int max_iter,
                    const InnerProduct& inner = InnerProduct::euclidean(),
                    CgInfo* info = nullptr) {
  if (rel_tol <= 0.0 || rel_tol >= 1.0)
    throw std::invalid_argument("cg_solve: rel_tol must be in (0, 1)");
  if (op.domain_dim >= 0 && rhs.size() != op.domain_dim)
    throw DimensionMismatch("cg_solve: rhs length " + std::to_string(rhs.size()) +
                            " does not match operator dimension " +
                            std::to_string(op.domain_dim));

  const double rhs_norm = inner.norm(rhs);
  Vec x = Vec::Zero(rhs.size());
  if (rhs_norm == 0.0) {
    if (info) *info = CgInfo{0, 0.0};
    return x;
  }

  Vec r = rhs;
  Vec p = r;
  double rr = inner(r, r);
  const double target = rel_tol * rhs_norm;

  int it = 0;
  double res_norm = std::sqrt(std::max(0.0, rr));
  while (res_norm > target) {
    if (it >= max_iter)
      throw NonConvergence("cg_solve: no convergence in " + std::to_string(max_iter) +
                               " iterations (residual " + std::to_string(res_norm / rhs_norm) +
                               " relative)",
                           it, res_norm / rhs_norm);
    ++it;
    const Vec ap = op(p);
    const double pap = inner(p, ap);
    if (!(pap > 0.0))
      throw SingularOperator("cg_solve: operator is not positive definite in the declared inner "
                             "product (p'Ap = " +
                             std::to_string(pap) + ")");
    const double alpha = rr / pap;
    x += alpha * p;
    r -= alpha * ap;
    const double rr_new = inner(r, r);
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    res_norm = std::sqrt(std::max(0.0, rr));
  }

  if (!all_finite(x)) throw SingularOperator("cg_solve: produced non-finite iterate");
  if (info) *info = CgInfo{it, res_norm / rhs_norm};
  return x;
}

inline CoefficientVector cg_solve(const LinearOperatorHandle& op, const CoefficientVector& rhs,
                                  double rel_tol, int max_iter,
                                  const InnerProduct& inner = InnerProduct::euclidean()) {
  if (rhs.space_tag != op.domain_tag && rhs.space_tag != op.range_tag)
    throw DimensionMismatch(std::string("cg_solve: rhs tagged '") + space_name(rhs.space_tag) +
                            "' does not match operator spaces");
  return tagged(cg_solve(op, rhs.values, rel_tol, max_iter, inner), op.domain_tag);
}

}  // namespace igsense
