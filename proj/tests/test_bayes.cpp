#include <catch2/catch_amalgamated.hpp>

#include "igsense/bayes.hpp"
#include "igsense/elliptic.hpp"
#include "igsense/oracle.hpp"
#include "igsense/twobytwo.hpp"
#include "support.hpp"

using namespace igsense;
using igsense_test::random_vec;

namespace {

InverseProblem elliptic_problem(int n, std::uint64_t noise_seed = 42) {
  const EllipticSetup setup = build_elliptic(n, observation_lattice_3x3());
  InverseProblem ip;
  ip.model = setup.model;
  ip.prior = std::make_shared<GaussianPrior>(
      GaussianPrior::bilaplacian(setup.model->assembly(), Vec::Zero(setup.model->parameter_dim())));
  ip.data = synthesize_data(*setup.model, true_source(setup.model->mesh()), setup.theta, 0.01,
                            noise_seed);
  ip.validate();
  return ip;
}

InverseProblem twobytwo_problem(const TwoByTwoSetup& setup) {
  InverseProblem ip;
  ip.model = std::make_shared<TwoByTwoModel>();
  ip.prior = std::make_shared<GaussianPrior>(GaussianPrior::identity(2));
  ip.data.u_obs = setup.u_obs;
  ip.data.noise_var = Vec::Constant(2, setup.sigma * setup.sigma);
  return ip;
}

}  // namespace

TEST_CASE("misfit hessian: homogeneous input, symmetry, and solve cost") {
  const InverseProblem ip = elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();

  const SolveCounts before = ip.counter->snapshot();
  const Vec zero = misfit_hessian_apply(ip, Vec::Zero(ip.model->parameter_dim()), theta);
  CHECK(zero.norm() == 0.0);
  const SolveCounts after = ip.counter->snapshot();
  CHECK((after - before).incremental_state_solves == 1);
  CHECK((after - before).incremental_adjoint_solves == 1);

  for (int trial = 0; trial < 5; ++trial) {
    const Vec m1 = random_vec(ip.model->parameter_dim(), 200 + trial, 1);
    const Vec m2 = random_vec(ip.model->parameter_dim(), 200 + trial, 2);
    const double h12 = misfit_hessian_apply(ip, m1, theta).dot(m2);
    const double h21 = misfit_hessian_apply(ip, m2, theta).dot(m1);
    CHECK(std::abs(h12 - h21) <= 1e-9 * std::max({1.0, std::abs(h12), std::abs(h21)}));
  }
}

TEST_CASE("misfit hessian matches the densely assembled normal operator") {
  const InverseProblem ip = elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();
  const oracle::DenseProblem dp = oracle::build_dense_problem(ip, theta);
  const Mat dense = dp.g.transpose() * dp.noise_var.cwiseInverse().asDiagonal() * dp.g;

  for (int trial = 0; trial < 3; ++trial) {
    const Vec m = random_vec(ip.model->parameter_dim(), 300 + trial);
    const Vec got = misfit_hessian_apply(ip, m, theta);
    const Vec want = dense * m;
    CHECK((got - want).norm() <= 1e-9 * std::max(1.0, want.norm()));
  }
}

TEST_CASE("full-rank spectrum: rank bound, orthonormality, and solve accounting") {
  const InverseProblem ip = elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();

  const SolveCounts before = ip.counter->snapshot();
  const SpectrumWithPairs sp = lowrank_spectrum_with_pairs(ip, theta, 9, 10, 3);
  const SolveCounts used = ip.counter->snapshot() - before;

  // assembled through the observation space: one adjoint + one state per observation
  CHECK(used.incremental_state_solves == 9);
  CHECK(used.incremental_adjoint_solves == 9);
  CHECK(sp.pairs_valid);

  // rank of the misfit Hessian is bounded by the observation count
  CHECK(sp.spectrum.rank() <= 9);
  CHECK((sp.spectrum.gammas.array() > 1e-12).count() <= 9);
  for (int i = 0; i + 1 < sp.spectrum.rank(); ++i)
    CHECK(sp.spectrum.gammas(i) >= sp.spectrum.gammas(i + 1));

  // B-orthonormality in the Cameron-Martin product
  const int r = sp.spectrum.rank();
  for (int i = 0; i < r; ++i)
    for (int j = i; j < r; ++j) {
      const double dot = ip.prior->cm_inner(sp.spectrum.psis.col(i), sp.spectrum.psis.col(j));
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) <= 1e-8);
    }
}

TEST_CASE("full-rank spectrum matches the dense generalized pencil") {
  const InverseProblem ip = elliptic_problem(16);
  const ThetaVector theta = elliptic_theta();
  const SpectrumWithPairs sp = lowrank_spectrum_with_pairs(ip, theta, 9, 10, 3);

  const oracle::DenseProblem dp = oracle::build_dense_problem(ip, theta);
  const oracle::DenseKldResult dense = oracle::dense_kld(dp, ip.data.u_obs);

  REQUIRE(sp.spectrum.rank() <= 9);
  for (int i = 0; i < sp.spectrum.rank(); ++i)
    CHECK(std::abs(sp.spectrum.gammas(i) - dense.gammas(i)) <=
          1e-8 * std::max(1.0, dense.gammas(i)));
}

TEST_CASE("cached incremental pairs equal directly solved pairs") {
  const InverseProblem ip = elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();

  SECTION("observation-basis path") {
    const SpectrumWithPairs sp = lowrank_spectrum_with_pairs(ip, theta, 9, 0, 3);
    REQUIRE(sp.pairs_valid);
    for (int i = 0; i < sp.spectrum.rank(); ++i) {
      const Vec uh = solve_incremental_state(*ip.model, sp.spectrum.psis.col(i), theta, *ip.counter);
      const Vec ph = solve_incremental_adjoint(*ip.model, uh, ip.data, theta, *ip.counter);
      CHECK((sp.uhat.col(i) - uh).norm() <= 1e-7 * std::max(1.0, uh.norm()));
      CHECK((sp.phat.col(i) - ph).norm() <= 1e-7 * std::max(1.0, ph.norm()));
    }
  }

  SECTION("randomized path") {
    const SpectrumWithPairs sp = lowrank_spectrum_with_pairs(ip, theta, 5, 8, 3);
    REQUIRE(sp.pairs_valid);
    REQUIRE(sp.spectrum.rank() == 5);
    for (int i = 0; i < 5; ++i) {
      const Vec uh = solve_incremental_state(*ip.model, sp.spectrum.psis.col(i), theta, *ip.counter);
      const Vec ph = solve_incremental_adjoint(*ip.model, uh, ip.data, theta, *ip.counter);
      CHECK((sp.uhat.col(i) - uh).norm() <= 1e-9 * std::max(1.0, uh.norm()));
      CHECK((sp.phat.col(i) - ph).norm() <= 1e-9 * std::max(1.0, ph.norm()));
    }
  }
}

TEST_CASE("randomized and observation-basis spectra agree") {
  const InverseProblem ip = elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();
  const LowRankSpectrum full = lowrank_spectrum(ip, theta, 9, 0, 3);
  const LowRankSpectrum rand5 = lowrank_spectrum(ip, theta, 5, 10, 3);
  REQUIRE(rand5.rank() == 5);
  for (int i = 0; i < 5; ++i)
    CHECK(std::abs(rand5.gammas(i) - full.gammas(i)) <= 1e-8 * std::max(1.0, full.gammas(i)));
}

TEST_CASE("inverse hessian: empty spectrum reduces to the prior covariance") {
  const InverseProblem ip = elliptic_problem(8);
  LowRankSpectrum empty;
  empty.gammas = Vec(0);
  empty.psis = Mat(ip.prior->dim(), 0);
  const Vec z = random_vec(ip.prior->dim(), 400);
  const Vec got = apply_inverse_hessian(empty, *ip.prior, z);
  CHECK((got - ip.prior->apply_cov(z)).norm() == 0.0);
}

TEST_CASE("inverse hessian matches the closed 2x2 posterior") {
  TwoByTwoSetup setup;  // theta = (0, 0)
  const InverseProblem ip = twobytwo_problem(setup);
  const ThetaVector theta = twobytwo_theta(0.0, 0.0);
  const LowRankSpectrum spec = lowrank_spectrum(ip, theta, 2, 0, 5);

  const Vec e2 = Vec::Unit(2, 1);
  const Vec got = apply_inverse_hessian(spec, *ip.prior, e2);
  CHECK(std::abs(got(1) - 1.0 / 101.0) < 1e-12);
  CHECK(std::abs(got(0)) < 1e-12);
}

TEST_CASE("inverse hessian at full rank matches the dense inverse") {
  const InverseProblem ip = elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();
  const LowRankSpectrum spec = lowrank_spectrum(ip, theta, 9, 0, 3);

  const oracle::DenseProblem dp = oracle::build_dense_problem(ip, theta);
  const Mat hessian =
      dp.g.transpose() * dp.noise_var.cwiseInverse().asDiagonal() * dp.g + dp.prior_precision;

  for (int trial = 0; trial < 3; ++trial) {
    const Vec z = random_vec(ip.prior->dim(), 500 + trial);
    const Vec got = apply_inverse_hessian(spec, *ip.prior, z);
    const Vec want = hessian.ldlt().solve(z);
    CHECK((got - want).norm() <= 1e-8 * std::max(1.0, want.norm()));
  }
}

TEST_CASE("woodbury identity holds at full rank") {
  const InverseProblem ip = elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();
  const LowRankSpectrum spec = lowrank_spectrum(ip, theta, 9, 0, 3);

  const Vec z = random_vec(ip.prior->dim(), 600);
  const Vec x = apply_inverse_hessian(spec, *ip.prior, z);
  const Vec back = misfit_hessian_apply(ip, x, theta) + ip.prior->apply_precision(x);
  CHECK((back - z).norm() <= 1e-7 * std::max(1.0, z.norm()));
}

TEST_CASE("map point: no signal means prior mean") {
  const InverseProblem base = elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();

  InverseProblem ip = base;
  SolveCounter scratch;
  const Vec f = ip.model->observe(
      solve_state(*ip.model, Vec::Zero(ip.model->parameter_dim()), theta, scratch));
  ip.data.u_obs = f;  // data indistinguishable from the affine shift

  const LowRankSpectrum spec = lowrank_spectrum(ip, theta, 9, 0, 3);
  const Vec m_post = map_point(ip, spec, theta);
  CHECK(m_post.norm() <= 1e-12);
}

TEST_CASE("map point satisfies first-order optimality") {
  const InverseProblem ip = elliptic_problem(32);
  const ThetaVector theta = elliptic_theta();
  const LowRankSpectrum spec = lowrank_spectrum(ip, theta, 9, 0, 3);
  const Vec m_post = map_point(ip, spec, theta);

  // objective gradient (dual): G'Gamma^{-1}(G m + f - u_obs) + C^{-1}(m - m_prior)
  auto grad_dual = [&](const Vec& m) -> Vec {
    SolveCounter scratch;
    const Vec u = solve_state(*ip.model, m, theta, scratch);
    const Vec w = (ip.model->observe(u) - ip.data.u_obs).cwiseQuotient(ip.data.noise_var);
    const Vec z = solve_incremental_adjoint_weighted(*ip.model, w, theta, scratch);
    return ip.model->c_apply_transpose(z, theta) + ip.prior->apply_precision(m - ip.prior->mean());
  };
  // measure gradients in the prior-covariance norm
  auto cov_norm = [&](const Vec& g) { return std::sqrt(g.dot(ip.prior->apply_cov(g))); };

  const double at_map = cov_norm(grad_dual(m_post));
  const double at_zero = cov_norm(grad_dual(Vec::Zero(ip.prior->dim())));
  CHECK(at_map <= 1e-6 * at_zero);
}

TEST_CASE("map point and information gain match the tiny-problem closed form") {
  TwoByTwoSetup setup;  // theta = (0, 0), u_obs = (0.15, 0.05), sigma = 0.1
  const InverseProblem ip = twobytwo_problem(setup);
  const ThetaVector theta = twobytwo_theta(0.0, 0.0);

  const LowRankSpectrum spec = lowrank_spectrum(ip, theta, 2, 0, 5);
  const Vec m_post = map_point(ip, spec, theta);
  CHECK(std::abs(m_post(0)) < 1e-12);
  CHECK(std::abs(m_post(1) - 5.0 / 101.0) < 1e-12);

  const double phi = information_gain(ip, spec, m_post);
  CHECK(std::abs(phi - 1.8137361) < 1e-6);
  CHECK(std::abs(expected_information_gain(spec) - 0.5 * std::log(101.0)) < 1e-10);
  CHECK(std::abs(expected_information_gain(spec) - 2.3075603) < 1e-6);
}

TEST_CASE("trivial information gain cases") {
  const InverseProblem ip = elliptic_problem(8);
  LowRankSpectrum empty;
  empty.gammas = Vec(0);
  empty.psis = Mat(ip.prior->dim(), 0);
  CHECK(information_gain(ip, empty, ip.prior->mean()) == 0.0);
  CHECK(expected_information_gain(empty) == 0.0);
}

TEST_CASE("expected information gain grows with every retained eigenpair") {
  const InverseProblem ip = elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();
  const LowRankSpectrum full = lowrank_spectrum(ip, theta, 9, 0, 3);

  double previous = -1.0;
  for (int r = 0; r <= full.rank(); ++r) {
    LowRankSpectrum truncated = full;
    truncated.gammas = full.gammas.head(r);
    truncated.psis = full.psis.leftCols(r);
    const double value = expected_information_gain(truncated);
    CHECK(value >= previous);
    previous = value;
  }
}

TEST_CASE("information gain converges monotonically in rank") {
  const InverseProblem ip = elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();

  std::vector<double> phi_at_rank;
  for (int r = 1; r <= 9; ++r) {
    const LowRankSpectrum spec = lowrank_spectrum(ip, theta, r, r < 9 ? 10 : 0, 3);
    const Vec m_post = map_point(ip, spec, theta);
    const double phi = information_gain(ip, spec, m_post);
    CHECK(phi >= 0.0);
    phi_at_rank.push_back(phi);
  }
  const double reference = phi_at_rank.back();
  for (std::size_t r = 0; r + 1 < phi_at_rank.size(); ++r) {
    const double err_low = std::abs(phi_at_rank[r] - reference);
    const double err_high = std::abs(phi_at_rank[r + 1] - reference);
    CHECK(err_high <= err_low + 1e-12 * std::max(1.0, std::abs(reference)));
  }
}

TEST_CASE("full information gain matches the dense oracle to 1e-10") {
  const InverseProblem ip = elliptic_problem(16);
  const ThetaVector theta = elliptic_theta();
  const LowRankSpectrum spec = lowrank_spectrum(ip, theta, 9, 0, 3);
  const Vec m_post = map_point(ip, spec, theta);
  const double phi = information_gain(ip, spec, m_post);
  const double phi_bar = expected_information_gain(spec);

  const oracle::DenseProblem dp = oracle::build_dense_problem(ip, theta);
  const oracle::DenseKldResult dense = oracle::dense_kld(dp, ip.data.u_obs);
  CHECK(std::abs(phi - dense.phi_ig) <= 1e-10 * std::max(1.0, std::abs(dense.phi_ig)));
  CHECK(std::abs(phi_bar - dense.phi_ig_bar) <= 1e-10 * std::max(1.0, std::abs(dense.phi_ig_bar)));
  CHECK((m_post - dense.m_post).norm() <= 1e-8 * std::max(1.0, dense.m_post.norm()));
}

TEST_CASE("map point cost: one state solve and one adjoint-type solve") {
  const InverseProblem ip = elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();
  const LowRankSpectrum spec = lowrank_spectrum(ip, theta, 9, 0, 3);

  const SolveCounts before = ip.counter->snapshot();
  (void)map_point(ip, spec, theta);
  const SolveCounts used = ip.counter->snapshot() - before;
  CHECK(used.state_solves == 1);
  CHECK(used.incremental_adjoint_solves == 1);
  CHECK(used.adjoint_solves == 0);
  CHECK(used.incremental_state_solves == 0);
}

TEST_CASE("spectrum guards against mismatched theta") {
  const InverseProblem ip = elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();
  const LowRankSpectrum spec = lowrank_spectrum(ip, theta, 9, 0, 3);
  const ThetaVector other = elliptic_theta(1.5, 0.1);
  CHECK_THROWS_AS(map_point(ip, spec, other), std::invalid_argument);
}
