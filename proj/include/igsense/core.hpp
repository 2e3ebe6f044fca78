#pragma once

// Shared linear-algebra plumbing: tagged coefficient vectors, weighted inner
// products, matrix-free operator handles, and the PDE solve counter that all
// cost accounting flows through.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <atomic>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace igsense {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct DimensionMismatch : std::runtime_error {
  explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct NonConvergence : std::runtime_error {
  NonConvergence(const std::string& what, int iterations_, double residual_)
      : std::runtime_error(what), iterations(iterations_), residual(residual_) {}
  int iterations;
  double residual;
};

struct SingularOperator : std::runtime_error {
  explicit SingularOperator(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidObservationPoint : std::runtime_error {
  explicit InvalidObservationPoint(const std::string& what) : std::runtime_error(what) {}
};

struct IndexOutOfRange : std::runtime_error {
  explicit IndexOutOfRange(const std::string& what) : std::runtime_error(what) {}
};

struct UnsupportedDistribution : std::runtime_error {
  explicit UnsupportedDistribution(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateVariance : std::runtime_error {
  explicit DegenerateVariance(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionGuard : std::runtime_error {
  explicit DimensionGuard(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Spaces and tagged vectors
// ---------------------------------------------------------------------------

enum class Space : int { State = 0, Adjoint, Parameter, Observation, Dual };

inline const char* space_name(Space s) {
  switch (s) {
    case Space::State: return "state";
    case Space::Adjoint: return "adjoint";
    case Space::Parameter: return "parameter";
    case Space::Observation: return "observation";
    case Space::Dual: return "dual";
  }
  return "?";
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

struct CoefficientVector {
  Vec values;
  Space space_tag = Space::Parameter;

  Eigen::Index size() const { return values.size(); }
};

inline CoefficientVector tagged(Vec v, Space s) { return CoefficientVector{std::move(v), s}; }

// Dimensions registered per space tag; used to validate tagged vectors at
// module boundaries.
class SpaceDims {
 public:
  void set(Space s, Eigen::Index dim) { dims_[static_cast<int>(s)] = dim; }

  Eigen::Index dim(Space s) const { return dims_[static_cast<int>(s)]; }

  void check(const CoefficientVector& x) const {
    const Eigen::Index expected = dim(x.space_tag);
    if (expected >= 0 && x.values.size() != expected)
      throw DimensionMismatch(std::string("vector tagged '") + space_name(x.space_tag) +
                              "' has length " + std::to_string(x.values.size()) +
                              ", registered dimension is " + std::to_string(expected));
    if (!all_finite(x.values))
      throw SingularOperator(std::string("vector tagged '") + space_name(x.space_tag) +
                             "' contains non-finite entries");
  }

 private:
  Eigen::Index dims_[5] = {-1, -1, -1, -1, -1};
};

// ---------------------------------------------------------------------------
// Inner products and operator handles
// ---------------------------------------------------------------------------

// Inner product induced by a symmetric positive definite weight operator,
// e.g. a mass matrix or a prior precision.
struct InnerProduct {
  std::function<Vec(const Vec&)> weight;

  double operator()(const Vec& x, const Vec& y) const { return x.dot(weight(y)); }

  double norm(const Vec& x) const { return std::sqrt(std::max(0.0, (*this)(x, x))); }

  static InnerProduct euclidean() {
    return InnerProduct{[](const Vec& v) { return v; }};
  }

  static InnerProduct diagonal(Vec w) {
    return InnerProduct{[w = std::move(w)](const Vec& v) -> Vec { return w.cwiseProduct(v); }};
  }
};

// Matrix-free linear operator with domain/range metadata. `apply` must be
// linear; when `symmetric_flag` is set the operator is self-adjoint in the
// inner product declared wherever the handle is consumed.
struct LinearOperatorHandle {
  std::function<Vec(const Vec&)> apply;
  Space domain_tag = Space::Parameter;
  Space range_tag = Space::Parameter;
  Eigen::Index domain_dim = -1;
  Eigen::Index range_dim = -1;
  bool symmetric_flag = false;

  Vec operator()(const Vec& x) const {
    if (domain_dim >= 0 && x.size() != domain_dim)
      throw DimensionMismatch("operator expects domain dimension " + std::to_string(domain_dim) +
                              ", got " + std::to_string(x.size()));
    Vec y = apply(x);
    if (range_dim >= 0 && y.size() != range_dim)
      throw DimensionMismatch("operator produced range dimension " + std::to_string(y.size()) +
                              ", declared " + std::to_string(range_dim));
    return y;
  }

  CoefficientVector checked_apply(const CoefficientVector& x) const {
    if (x.space_tag != domain_tag)
      throw DimensionMismatch(std::string("operator domain is '") + space_name(domain_tag) +
                              "', got vector tagged '" + space_name(x.space_tag) + "'");
    Vec y = (*this)(x.values);
    if (!all_finite(y)) throw SingularOperator("operator produced non-finite entries");
    return tagged(std::move(y), range_tag);
  }

  static LinearOperatorHandle from_dense(const Mat& a, Space dom = Space::Parameter,
                                         Space ran = Space::Parameter, bool symmetric = false) {
    return LinearOperatorHandle{[a](const Vec& x) -> Vec { return a * x; },
                                dom,
                                ran,
                                a.cols(),
                                a.rows(),
                                symmetric};
  }

  static LinearOperatorHandle identity(Eigen::Index n, Space s = Space::Parameter) {
    return LinearOperatorHandle{[](const Vec& x) { return x; }, s, s, n, n, true};
  }
};

// ---------------------------------------------------------------------------
// Solve accounting
// ---------------------------------------------------------------------------

struct SolveCounts {
  long state_solves = 0;
  long adjoint_solves = 0;
  long incremental_state_solves = 0;
  long incremental_adjoint_solves = 0;

  long incremental_total() const { return incremental_state_solves + incremental_adjoint_solves; }
  long state_adjoint_total() const { return state_solves + adjoint_solves; }
  long total() const { return incremental_total() + state_adjoint_total(); }

  SolveCounts operator-(const SolveCounts& o) const {
    return SolveCounts{state_solves - o.state_solves, adjoint_solves - o.adjoint_solves,
                       incremental_state_solves - o.incremental_state_solves,
                       incremental_adjoint_solves - o.incremental_adjoint_solves};
  }
};

// Monotone counters; atomic so concurrent solves against a shared problem can
// account without locking.
class SolveCounter {
 public:
  void bump_state() { state_.fetch_add(1, std::memory_order_relaxed); }
  void bump_adjoint() { adjoint_.fetch_add(1, std::memory_order_relaxed); }
  void bump_incremental_state() { inc_state_.fetch_add(1, std::memory_order_relaxed); }
  void bump_incremental_adjoint() { inc_adjoint_.fetch_add(1, std::memory_order_relaxed); }

  SolveCounts snapshot() const {
    return SolveCounts{state_.load(), adjoint_.load(), inc_state_.load(), inc_adjoint_.load()};
  }

 private:
  std::atomic<long> state_{0};
  std::atomic<long> adjoint_{0};
  std::atomic<long> inc_state_{0};
  std::atomic<long> inc_adjoint_{0};
};

// Deterministic pairwise reduction; result does not depend on how the values
// were produced, only on their order in the array.
inline double pairwise_sum(const double* data, std::size_t n) {
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

}  // namespace igsense
