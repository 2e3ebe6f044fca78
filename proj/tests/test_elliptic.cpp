#include <catch2/catch_amalgamated.hpp>

#include "igsense/elliptic.hpp"
#include "igsense/fem.hpp"
#include "igsense/model.hpp"
#include "support.hpp"

using namespace igsense;
using igsense_test::dense_state_operator;

TEST_CASE("unit square mesh invariants") {
  const UnitSquareMesh mesh = UnitSquareMesh::uniform(5);
  CHECK(mesh.nodes.rows() == 36);
  CHECK(mesh.triangles.rows() == 50);

  // every triangle positively oriented
  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
    const auto a = mesh.nodes.row(mesh.triangles(t, 0));
    const auto b = mesh.nodes.row(mesh.triangles(t, 1));
    const auto c = mesh.nodes.row(mesh.triangles(t, 2));
    const double twice_area = (b(0) - a(0)) * (c(1) - a(1)) - (c(0) - a(0)) * (b(1) - a(1));
    REQUIRE(twice_area > 0.0);
  }

  // boundary edges cover the boundary exactly once: total length 4
  double total = 0.0;
  for (Eigen::Index e = 0; e < mesh.boundary_edges.rows(); ++e)
    total += (mesh.nodes.row(mesh.boundary_edges(e, 0)) - mesh.nodes.row(mesh.boundary_edges(e, 1)))
                 .norm();
  CHECK(std::abs(total - 4.0) < 1e-12);
  CHECK(mesh.boundary_edges.rows() == 20);
}

TEST_CASE("patch test: constant source with c = 1, g = 0 gives a constant solution") {
  const EllipticSetup setup = build_elliptic(4, observation_lattice_3x3());
  const ThetaVector theta = elliptic_theta(1.0, 0.0, 0.5, 2.0, 0.0, 0.5);
  SolveCounter counter;
  const Vec m = Vec::Ones(setup.model->parameter_dim());
  const Vec u = solve_state(*setup.model, m, theta, counter);
  CHECK((u - Vec::Ones(u.size())).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((setup.model->observe(u) - Vec::Ones(9)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("reaction partial of the a-form is exact against finite differences") {
  const EllipticSetup setup = build_elliptic(6, observation_lattice_3x3());
  const ThetaVector theta = setup.theta;
  const Vec p = igsense_test::random_vec(setup.model->state_dim(), 3, 1);
  const Vec u = igsense_test::random_vec(setup.model->state_dim(), 3, 2);

  const double h = 1e-6;
  const double fd = (setup.model->a_form(p, u, theta.with_value(0, 1.0 + h)) -
                     setup.model->a_form(p, u, theta.with_value(0, 1.0 - h))) /
                    (2.0 * h);
  const double exact = setup.model->a_form_dtheta(0, p, u, theta);
  CHECK(std::abs(exact - fd) <= 1e-8 * std::max(1.0, std::abs(exact)));
  CHECK(setup.model->a_form_dtheta(1, p, u, theta) == 0.0);
}

TEST_CASE("true source values and symmetry") {
  const UnitSquareMesh mesh = UnitSquareMesh::uniform(8);
  const Vec m = true_source(mesh);
  CHECK(std::abs(m(mesh.node_index(4, 4)) - 10.0) < 1e-14);                    // center
  CHECK(std::abs(m(mesh.node_index(0, 0)) - 10.0 * std::exp(-0.025)) < 1e-12);  // corner
  CHECK(std::abs(m(mesh.node_index(0, 0)) - 9.75310) < 1e-5);
  for (int i = 0; i <= 8; ++i)
    for (int j = 0; j <= 8; ++j)
      CHECK(m(mesh.node_index(i, j)) ==
            Catch::Approx(m(mesh.node_index(8 - i, 8 - j))).epsilon(1e-14));
}

TEST_CASE("interpolation rows are convex weights; outside points are rejected") {
  const UnitSquareMesh mesh = UnitSquareMesh::uniform(7);
  Mat pts(3, 2);
  pts << 0.33, 0.41, 0.5, 0.5, 0.87, 0.13;
  const SpMat q = interpolation_matrix(mesh, pts);
  Mat dense = Mat(q);
  for (Eigen::Index r = 0; r < dense.rows(); ++r) {
    CHECK(std::abs(dense.row(r).sum() - 1.0) < 1e-14);
    CHECK(dense.row(r).minCoeff() >= 0.0);
  }

  Mat outside(1, 2);
  outside << 1.2, 0.5;
  CHECK_THROWS_AS(interpolation_matrix(mesh, outside), InvalidObservationPoint);
  Mat on_edge(1, 2);
  on_edge << 0.0, 0.5;
  CHECK_THROWS_AS(interpolation_matrix(mesh, on_edge), InvalidObservationPoint);
}

TEST_CASE("state solution converges against a 4x refined reference") {
  const ThetaVector theta = elliptic_theta();
  SolveCounter counter;

  const EllipticSetup coarse = build_elliptic(32, observation_lattice_3x3());
  const Vec m_coarse = true_source(coarse.model->mesh());
  const Vec u_coarse = solve_state(*coarse.model, m_coarse, theta, counter);

  const EllipticSetup fine = build_elliptic(128, observation_lattice_3x3());
  const Vec m_fine = true_source(fine.model->mesh());
  const Vec u_fine = solve_state(*fine.model, m_fine, theta, counter);

  // coarse nodes are a subset of fine nodes (128 = 4 * 32)
  double num = 0.0, den = 0.0;
  for (int j = 0; j <= 32; ++j)
    for (int i = 0; i <= 32; ++i) {
      const double uc = u_coarse(coarse.model->mesh().node_index(i, j));
      const double uf = u_fine(fine.model->mesh().node_index(4 * i, 4 * j));
      num += (uc - uf) * (uc - uf);
      den += uf * uf;
    }
  CHECK(std::sqrt(num / den) <= 1e-3);
}

TEST_CASE("adjoint matches a dense transpose solve") {
  const EllipticSetup setup = build_elliptic(8, observation_lattice_3x3());
  const ThetaVector theta = setup.theta;
  const Vec m_true = true_source(setup.model->mesh());
  const ObservationData data = synthesize_data(*setup.model, m_true, theta, 0.01, 42);

  SolveCounter counter;
  const Vec u = solve_state(*setup.model, m_true, theta, counter);
  const Vec p = solve_adjoint(*setup.model, u, data, theta, counter);

  const Mat s = dense_state_operator(*setup.model, theta);
  const Vec w = (setup.model->observe(u) - data.u_obs).cwiseQuotient(data.noise_var);
  const Vec rhs = -setup.model->observe_adjoint(w);
  const Vec p_dense = s.transpose().partialPivLu().solve(rhs);
  CHECK((p - p_dense).norm() <= 1e-8 * std::max(1.0, p_dense.norm()));
}

TEST_CASE("incremental solves match a dense oracle for a nodal indicator") {
  const EllipticSetup setup = build_elliptic(8, observation_lattice_3x3());
  const ThetaVector theta = setup.theta;
  SolveCounter counter;

  Vec mhat = Vec::Zero(setup.model->parameter_dim());
  mhat(setup.model->mesh().node_index(4, 4)) = 1.0;  // center node
  const Vec uh = solve_incremental_state(*setup.model, mhat, theta, counter);

  const Mat s = dense_state_operator(*setup.model, theta);
  const Vec uh_dense = s.partialPivLu().solve(-setup.model->c_apply(mhat, theta));
  CHECK((uh - uh_dense).norm() <= 1e-8 * std::max(1.0, uh_dense.norm()));
}

TEST_CASE("galerkin symmetry of the state operator") {
  const EllipticSetup setup = build_elliptic(6, observation_lattice_3x3());
  const ThetaVector theta = elliptic_theta(1.7, 0.3);
  const Vec x = igsense_test::random_vec(setup.model->state_dim(), 9, 1);
  const Vec y = igsense_test::random_vec(setup.model->state_dim(), 9, 2);
  const double axy = setup.model->state_op_apply(x, theta).dot(y);
  const double xay = x.dot(setup.model->state_op_apply(y, theta));
  CHECK(std::abs(axy - xay) <= 1e-10 * std::max(1.0, std::abs(axy)));
}

TEST_CASE("system stays solvable across the sweep box; c <= 0 is rejected") {
  const EllipticSetup setup = build_elliptic(6, observation_lattice_3x3());
  SolveCounter counter;
  const Vec m = true_source(setup.model->mesh());
  for (double c : {0.5, 1.0, 1.5, 2.0}) {
    const ThetaVector theta = elliptic_theta(c, 0.1);
    CHECK_NOTHROW(solve_state(*setup.model, m, theta, counter));
  }
  CHECK_THROWS_AS(elliptic_theta(0.0, 0.1), ConfigError);
  CHECK_THROWS_AS(elliptic_theta(-1.0, 0.1, -2.0, 2.0), ConfigError);
}

TEST_CASE("affinity and cancellation of the boundary source") {
  const EllipticSetup setup = build_elliptic(8, observation_lattice_3x3());
  const ThetaVector theta = setup.theta;  // g = 0.1
  SolveCounter counter;

  const Vec m1 = igsense_test::random_vec(setup.model->parameter_dim(), 12, 1);
  const Vec u0 = solve_state(*setup.model, Vec::Zero(setup.model->parameter_dim()), theta, counter);
  const Vec u1 = solve_state(*setup.model, m1, theta, counter);
  const Vec uh = solve_incremental_state(*setup.model, m1, theta, counter);
  CHECK((uh - (u1 - u0)).norm() <= 1e-10 * std::max(1.0, uh.norm()));
}

TEST_CASE("synthetic data: zero noise, determinism, and sampler variance") {
  const EllipticSetup setup = build_elliptic(8, observation_lattice_3x3());
  const ThetaVector theta = setup.theta;
  const Vec m_true = true_source(setup.model->mesh());

  SolveCounter counter;
  const Vec clean = setup.model->observe(solve_state(*setup.model, m_true, theta, counter));

  const ObservationData noiseless = synthesize_data(*setup.model, m_true, theta, 0.0, 7);
  CHECK((noiseless.u_obs - clean).norm() == 0.0);

  const ObservationData a = synthesize_data(*setup.model, m_true, theta, 0.01, 7);
  const ObservationData b = synthesize_data(*setup.model, m_true, theta, 0.01, 7);
  CHECK(a.u_obs == b.u_obs);  // bitwise
  const ObservationData c = synthesize_data(*setup.model, m_true, theta, 0.01, 8);
  CHECK(a.u_obs != c.u_obs);

  // Monte Carlo check of the sampler: mean squared noise ~= sigma^2 within 5%
  const double sigma2 = a.noise_var(0);
  double acc = 0.0;
  const int replicates = 10000;
  for (int s = 0; s < replicates; ++s) {
    const ObservationData rep = synthesize_data(*setup.model, m_true, theta, 0.01, 1000 + s);
    acc += (rep.u_obs - clean).squaredNorm() / rep.n_obs();
  }
  const double mean_sq = acc / replicates;
  CHECK(std::abs(mean_sq - sigma2) <= 0.05 * sigma2);
}
