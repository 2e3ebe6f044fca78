#pragma once

// Source-inversion forward model on the unit square:
//
//   -Laplace(u) + c u = m   in (0,1)^2,     grad(u) . n = g   on the boundary,
//
// discretized with P1 triangles. The auxiliary parameters are theta = (c, g).
// In weak form: a(p, u) = p'(K + c M) u, c(p, m) = -p' M m,
// d(p) = -g (Mb 1)' p, so that a + c + d = 0 reproduces the PDE.

#include <deque>
#include <memory>
#include <mutex>
#include <utility>

#include <Eigen/SparseCholesky>

#include "igsense/core.hpp"
#include "igsense/fem.hpp"
#include "igsense/model.hpp"
#include "igsense/rng.hpp"

namespace igsense {

inline Mat observation_lattice_3x3() {
  Mat pts(9, 2);
  int r = 0;
  for (int j = 1; j <= 3; ++j)
    for (int i = 1; i <= 3; ++i) pts.row(r++) << 0.25 * i, 0.25 * j;
  return pts;
}

// Nodal interpolation of the reference source 10 exp(-[(x-1/2)^2+(y-1/2)^2]/20).
inline Vec true_source(const UnitSquareMesh& mesh) {
  return nodal_interpolate(mesh, [](double x, double y) {
    return 10.0 * std::exp(-((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5)) / 20.0);
  });
}

class EllipticModel : public ForwardModel {
 public:
  EllipticModel(int n, const Mat& obs_points) {
    if (n < 2) throw ConfigError("EllipticModel: mesh must have at least 2 cells per side");
    mesh_ = std::make_shared<UnitSquareMesh>(UnitSquareMesh::uniform(n));
    assembly_ = std::make_shared<P1Assembly>(P1Assembly::assemble(*mesh_));
    obs_ = std::make_shared<SpMat>(interpolation_matrix(*mesh_, obs_points));
    boundary_load_ =
        std::make_shared<Vec>(assembly_->boundary_mass * Vec::Ones(mesh_->n_nodes()));
  }

  const UnitSquareMesh& mesh() const { return *mesh_; }
  const P1Assembly& assembly() const { return *assembly_; }
  const SpMat& observation_matrix() const { return *obs_; }

  int state_dim() const override { return mesh_->n_nodes(); }
  int parameter_dim() const override { return mesh_->n_nodes(); }
  int n_obs() const override { return static_cast<int>(obs_->rows()); }
  int n_theta() const override { return 2; }

  std::shared_ptr<ForwardModel> clone() const override {
    auto copy = std::make_shared<EllipticModel>(*this);
    copy->cache_ = std::make_shared<FactorCache>();  // private factorization cache
    return copy;
  }

  Vec state_op_apply(const Vec& u, const ThetaVector& theta) const override {
    return assembly_->stiffness * u + theta.values(0) * (assembly_->mass * u);
  }
  Vec state_op_apply_transpose(const Vec& p, const ThetaVector& theta) const override {
    return state_op_apply(p, theta);  // K + cM is symmetric
  }
  Vec state_op_solve(const Vec& rhs, const ThetaVector& theta) const override {
    return factor(theta.values(0))->solve(rhs);
  }
  Vec state_op_solve_transpose(const Vec& rhs, const ThetaVector& theta) const override {
    return state_op_solve(rhs, theta);
  }

  Vec c_apply(const Vec& m, const ThetaVector&) const override { return -(assembly_->mass * m); }
  Vec c_apply_transpose(const Vec& p, const ThetaVector&) const override {
    return -(assembly_->mass * p);
  }
  Vec d_vector(const ThetaVector& theta) const override {
    return -theta.values(1) * *boundary_load_;
  }

  Vec a_dtheta_apply(int j, const Vec& u, const ThetaVector&) const override {
    check_j(j);
    if (j == 0) return assembly_->mass * u;
    return Vec::Zero(u.size());
  }
  Vec a_dtheta_apply_transpose(int j, const Vec& p, const ThetaVector& theta) const override {
    return a_dtheta_apply(j, p, theta);
  }
  Vec c_dtheta_apply(int j, const Vec& m, const ThetaVector&) const override {
    check_j(j);
    return Vec::Zero(m.size());
  }
  Vec c_dtheta_apply_transpose(int j, const Vec& p, const ThetaVector&) const override {
    check_j(j);
    return Vec::Zero(p.size());
  }
  Vec d_dtheta_vector(int j, const ThetaVector&) const override {
    check_j(j);
    if (j == 1) return -*boundary_load_;
    return Vec::Zero(boundary_load_->size());
  }

  Vec observe(const Vec& u) const override { return *obs_ * u; }
  Vec observe_adjoint(const Vec& w) const override { return obs_->transpose() * w; }

 private:
  using Factor = Eigen::SimplicialLDLT<SpMat>;

  struct FactorCache {
    std::mutex mu;
    std::deque<std::pair<double, std::shared_ptr<const Factor>>> entries;
    static constexpr std::size_t capacity = 8;
  };

  std::shared_ptr<const Factor> factor(double c) const {
    if (!(c > 0.0)) throw SingularOperator("EllipticModel: reaction coefficient must be positive");
    std::lock_guard<std::mutex> lock(cache_->mu);
    for (const auto& [key, f] : cache_->entries)
      if (key == c) return f;
    SpMat op = assembly_->stiffness + c * assembly_->mass;
    auto f = std::make_shared<Factor>();
    f->compute(op);
    if (f->info() != Eigen::Success)
      throw SingularOperator("EllipticModel: state operator factorization failed");
    cache_->entries.emplace_back(c, f);
    if (cache_->entries.size() > FactorCache::capacity) cache_->entries.pop_front();
    return cache_->entries.back().second;
  }

  void check_j(int j) const {
    if (j < 0 || j >= 2) throw IndexOutOfRange("EllipticModel: theta index " + std::to_string(j));
  }

  std::shared_ptr<const UnitSquareMesh> mesh_;
  std::shared_ptr<const P1Assembly> assembly_;
  std::shared_ptr<const SpMat> obs_;
  std::shared_ptr<const Vec> boundary_load_;  // Mb * 1
  std::shared_ptr<FactorCache> cache_ = std::make_shared<FactorCache>();
};

struct EllipticSetup {
  std::shared_ptr<EllipticModel> model;
  ThetaVector theta;
};

inline ThetaVector elliptic_theta(double c_nominal = 1.0, double g_nominal = 0.1,
                                  double c_lo = 0.5, double c_hi = 2.0, double g_lo = 0.02,
                                  double g_hi = 0.5) {
  Mat box(2, 2);
  box << c_lo, c_hi, g_lo, g_hi;
  Vec nominal(2);
  nominal << c_nominal, g_nominal;
  if (!(c_lo > 0.0) || !(c_nominal > 0.0))
    throw ConfigError("elliptic model: reaction coefficient c must stay positive");
  return ThetaVector::make(nominal, {"c", "g"}, nominal, box);
}

inline EllipticSetup build_elliptic(int n, const Mat& obs_points, double c_nominal = 1.0,
                                    double g_nominal = 0.1) {
  EllipticSetup setup;
  setup.model = std::make_shared<EllipticModel>(n, obs_points);
  setup.theta = elliptic_theta(c_nominal, g_nominal);
  return setup;
}

// Synthetic observations: u_obs = Q u(m_true; theta_true) + eps with
// eps ~ N(0, sigma^2 I) and sigma = scale * max|u|. Noise draws come from the
// counter-based sampler, so a seed pins the data bitwise.
inline ObservationData synthesize_data(const ForwardModel& model, const Vec& m_true,
                                       const ThetaVector& theta_true, double noise_scale,
                                       std::uint64_t seed) {
  SolveCounter scratch;
  const Vec u = solve_state(model, m_true, theta_true, scratch);
  const Vec clean = model.observe(u);
  const double sigma = noise_scale * u.cwiseAbs().maxCoeff();
  ObservationData data;
  data.u_obs = clean;
  for (Eigen::Index k = 0; k < clean.size(); ++k)
    data.u_obs(k) += sigma * rng::normal(seed, /*stream=*/1, static_cast<std::uint64_t>(k));
  const double var = sigma > 0.0 ? sigma * sigma : 1.0;  // exact data still needs a valid noise model
  data.noise_var = Vec::Constant(clean.size(), var);
  data.validate();
  return data;
}

}  // namespace igsense
