#pragma once

// Double-pass randomized solver for the generalized Hermitian eigenvalue
// problem A psi = gamma B psi with A symmetric positive semidefinite and B
// symmetric positive definite. Pass one sketches the range of B^{-1}A with a
// seeded Gaussian block; pass two does Rayleigh-Ritz on the B-orthonormalized
// basis. Returned eigenvectors are B-orthonormal with nonincreasing
// eigenvalues.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "igsense/core.hpp"
#include "igsense/rng.hpp"

namespace igsense {

// Eigenvalues at or below this absolute floor are treated as zero rank.
inline constexpr double kEigenvalueFloor = 1e-14;
// Adjacent eigenvalues closer than this relative gap are flagged as repeated.
inline constexpr double kRepeatedGapTol = 1e-8;

struct LowRankSpectrum {
  Vec gammas;          // retained eigenvalues, nonincreasing, all > floor
  Mat psis;            // columns are B-orthonormal eigenvectors
  int requested_rank = 0;
  bool rank_deficient = false;           // fewer than requested_rank above the floor
  bool repeated_eigenvalues = false;     // some retained pair closer than kRepeatedGapTol
  Vec theta_at;                          // auxiliary-parameter values the spectrum was built at

  int rank() const { return static_cast<int>(gammas.size()); }
};

inline bool has_repeated_eigenvalues(const Vec& gammas) {
  for (Eigen::Index i = 0; i + 1 < gammas.size(); ++i) {
    const double scale = std::max(std::abs(gammas(i)), std::abs(gammas(i + 1)));
    if (scale > 0.0 && std::abs(gammas(i) - gammas(i + 1)) < kRepeatedGapTol * scale) return true;
  }
  return false;
}

// Internals a caller may want back: the B-orthonormal basis Q and the small
// eigenvector block V with psis = Q * V (sign normalization folded into V).
// Anything applied to the columns of Q during the second pass can be
// recombined through V without further operator applications.
struct GeneralizedEigDetail {
  Mat basis;
  Mat small_vectors;
  int pass1_applies = 0;
  int pass2_applies = 0;
};

namespace detail {

// B-orthonormalize the columns of y in place (two rounds of modified
// Gram-Schmidt). Returns the kept column count; columns whose B-norm
// collapses under projection are dropped as dependent.
inline Eigen::Index b_orthonormalize(Mat& y, const std::function<Vec(const Vec&)>& b_apply) {
  const Eigen::Index n = y.rows();
  Eigen::Index kept = 0;
  Mat by(n, y.cols());
  for (int round = 0; round < 2; ++round) {
    kept = 0;
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      Vec v = y.col(j);
      const double orig2 = round == 0 ? v.dot(b_apply(v)) : 1.0;
      for (Eigen::Index k = 0; k < kept; ++k) v -= by.col(k).dot(v) * y.col(k);
      Vec bv = b_apply(v);
      const double nrm2 = v.dot(bv);
      if (nrm2 <= 0.0 || (round == 0 && nrm2 <= 1e-28 * orig2)) continue;  // dependent sample
      const double nrm = std::sqrt(nrm2);
      y.col(kept) = v / nrm;
      by.col(kept) = bv / nrm;
      ++kept;
    }
    y.conservativeResize(n, kept);
    by.conservativeResize(n, kept);
  }
  return kept;
}

// Flip signs so each eigenvector's entry of largest magnitude is positive.
inline void sign_normalize_columns(Mat& v, const Mat& q) {
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    const Vec psi = q * v.col(j);
    Eigen::Index imax = 0;
    psi.cwiseAbs().maxCoeff(&imax);
    if (psi(imax) < 0.0) v.col(j) *= -1.0;
  }
}

}  // namespace detail

inline LowRankSpectrum eig_lowrank_generalized(const LinearOperatorHandle& a_apply,
                                               const LinearOperatorHandle& b_apply,
                                               const LinearOperatorHandle& b_inv_apply,
                                               int rank, int oversample, std::uint64_t seed,
                                               GeneralizedEigDetail* out_detail = nullptr) {
  const Eigen::Index n = a_apply.domain_dim;
  if (n <= 0) throw DimensionMismatch("eig_lowrank_generalized: operator dimension unknown");
  if (rank < 0 || oversample < 0)
    throw std::invalid_argument("eig_lowrank_generalized: rank and oversample must be >= 0");
  if (rank + oversample > n)
    throw DimensionMismatch("eig_lowrank_generalized: rank + oversample = " +
                            std::to_string(rank + oversample) + " exceeds dimension " +
                            std::to_string(n));

  const Eigen::Index l = std::max<Eigen::Index>(1, rank + oversample);

  // Pass 1: sketch. Y = B^{-1} A Omega spans (w.h.p.) the dominant
  // eigenspace of the pencil.
  const Mat omega = rng::gaussian_matrix(n, l, seed, /*stream=*/0);
  Mat y(n, l);
  int pass1 = 0;
  for (Eigen::Index j = 0; j < l; ++j) {
    y.col(j) = b_inv_apply(a_apply(omega.col(j)));
    ++pass1;
  }

  const Eigen::Index kept = detail::b_orthonormalize(y, b_apply.apply);
  if (kept == 0) {
    LowRankSpectrum empty;
    empty.requested_rank = rank;
    empty.rank_deficient = rank > 0;
    empty.psis = Mat(n, 0);
    empty.gammas = Vec(0);
    if (out_detail) *out_detail = GeneralizedEigDetail{Mat(n, 0), Mat(0, 0), pass1, 0};
    return empty;
  }

  // Pass 2: Rayleigh-Ritz in the B-orthonormal basis.
  Mat aq(n, kept);
  int pass2 = 0;
  for (Eigen::Index j = 0; j < kept; ++j) {
    aq.col(j) = a_apply(y.col(j));
    ++pass2;
  }
  Mat t = y.transpose() * aq;
  t = 0.5 * (t + t.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Mat> es(t);
  if (es.info() != Eigen::Success)
    throw SingularOperator("eig_lowrank_generalized: small eigenproblem failed");

  // Ascending from Eigen; retain the top `rank` above the floor, descending.
  std::vector<Eigen::Index> order;
  for (Eigen::Index j = kept - 1; j >= 0 && static_cast<int>(order.size()) < rank; --j) {
    if (es.eigenvalues()(j) > kEigenvalueFloor) order.push_back(j);
  }

  LowRankSpectrum spec;
  spec.requested_rank = rank;
  spec.rank_deficient = static_cast<int>(order.size()) < rank;
  spec.gammas = Vec(static_cast<Eigen::Index>(order.size()));
  Mat v(kept, static_cast<Eigen::Index>(order.size()));
  for (std::size_t i = 0; i < order.size(); ++i) {
    spec.gammas(static_cast<Eigen::Index>(i)) = es.eigenvalues()(order[i]);
    v.col(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(order[i]);
  }
  detail::sign_normalize_columns(v, y);
  spec.psis = y * v;
  spec.repeated_eigenvalues = has_repeated_eigenvalues(spec.gammas);

  if (out_detail) *out_detail = GeneralizedEigDetail{y, v, pass1, pass2};
  return spec;
}

}  // namespace igsense
