#pragma once

// Command implementations behind the CLI driver: solve, sensitivity, sweep,
// gsa, verify. Each writes CSV files into an output directory and is bitwise
// reproducible for a fixed config, independent of the worker count.

#include <filesystem>
#include <string>
#include <vector>

#include "igsense/bayes.hpp"
#include "igsense/cg.hpp"
#include "igsense/config.hpp"
#include "igsense/csv.hpp"
#include "igsense/elliptic.hpp"
#include "igsense/gsa.hpp"
#include "igsense/hdsa.hpp"
#include "igsense/oracle.hpp"
#include "igsense/parallel.hpp"
#include "igsense/randeig.hpp"
#include "igsense/rng.hpp"
#include "igsense/twobytwo.hpp"

namespace igsense {

struct BuiltProblem {
  InverseProblem ip;
  ThetaVector theta;
  int rank = 0;
  std::shared_ptr<const EllipticModel> elliptic;  // null for the analytic model
};

inline BuiltProblem build_problem(const RunConfig& cfg) {
  BuiltProblem built;
  if (cfg.model == "twobytwo") {
    built.ip.model = std::make_shared<TwoByTwoModel>();
    built.ip.prior = std::make_shared<GaussianPrior>(GaussianPrior::identity(2));
    built.ip.data.u_obs = cfg.u_obs;
    built.ip.data.noise_var = Vec::Constant(2, cfg.sigma * cfg.sigma);
  } else {
    const Mat obs = cfg.obs_points ? *cfg.obs_points : observation_lattice_3x3();
    auto model = std::make_shared<EllipticModel>(cfg.mesh_n, obs);
    if (!(cfg.theta_box(0, 0) > 0.0))
      throw ConfigError("theta.box: the reaction coefficient must stay positive");
    built.ip.model = model;
    built.elliptic = model;
    built.ip.prior = std::make_shared<GaussianPrior>(GaussianPrior::bilaplacian(
        model->assembly(), Vec::Constant(model->parameter_dim(), cfg.prior_mean),
        cfg.mass_inverse == "lumped" ? MassInverse::Lumped : MassInverse::Cg));
    const ThetaVector theta_true = ThetaVector::make(cfg.theta_nominal, cfg.theta_names,
                                                     cfg.theta_nominal, cfg.theta_box);
    built.ip.data = synthesize_data(*model, true_source(model->mesh()), theta_true,
                                    cfg.noise_scale, cfg.noise_seed);
  }
  built.theta =
      ThetaVector::make(cfg.theta_nominal, cfg.theta_names, cfg.theta_nominal, cfg.theta_box);
  built.ip.validate();
  built.rank = cfg.rank >= 0 ? cfg.rank : built.ip.model->n_obs();
  return built;
}

namespace detail {

inline std::filesystem::path prepare_output(const RunConfig& cfg, const std::string& override_dir) {
  const std::filesystem::path dir = override_dir.empty() ? cfg.output : override_dir;
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace detail

// solve: MAP nodal values, retained spectrum, and a one-row summary.
inline void cmd_solve(const RunConfig& cfg, const std::string& out_dir = "") {
  const std::filesystem::path dir = detail::prepare_output(cfg, out_dir);
  BuiltProblem built = build_problem(cfg);

  const SolveCounts before = built.ip.counter->snapshot();
  const SpectrumWithPairs sp =
      lowrank_spectrum_with_pairs(built.ip, built.theta, built.rank, cfg.oversample, cfg.eig_seed);
  const Vec m_post = map_point(built.ip, sp.spectrum, built.theta);
  const double phi = information_gain(built.ip, sp.spectrum, m_post);
  const double phi_bar = expected_information_gain(sp.spectrum);
  const SolveCounts used = built.ip.counter->snapshot() - before;

  if (built.elliptic) {
    CsvWriter map_csv(dir / "map.csv", {"index", "x", "y", "value"});
    const auto& mesh = built.elliptic->mesh();
    for (Eigen::Index i = 0; i < m_post.size(); ++i)
      map_csv.row({static_cast<double>(i), mesh.nodes(i, 0), mesh.nodes(i, 1), m_post(i)});
  } else {
    CsvWriter map_csv(dir / "map.csv", {"index", "value"});
    for (Eigen::Index i = 0; i < m_post.size(); ++i)
      map_csv.row({static_cast<double>(i), m_post(i)});
  }

  CsvWriter spectrum_csv(dir / "spectrum.csv", {"i", "gamma"});
  for (int i = 0; i < sp.spectrum.rank(); ++i)
    spectrum_csv.row({static_cast<double>(i), sp.spectrum.gammas(i)});

  CsvWriter summary_csv(dir / "summary.csv",
                        {"phi_ig", "phi_ig_bar", "rank", "requested_rank", "gamma_max",
                         "gamma_tail_ratio", "state_solves", "adjoint_solves",
                         "incremental_state_solves", "incremental_adjoint_solves"});
  const double gamma_max = sp.spectrum.rank() > 0 ? sp.spectrum.gammas(0) : 0.0;
  const double tail = sp.spectrum.rank() > 0
                          ? sp.spectrum.gammas(sp.spectrum.rank() - 1) / sp.spectrum.gammas(0)
                          : 0.0;
  summary_csv.row({phi, phi_bar, static_cast<double>(sp.spectrum.rank()),
                   static_cast<double>(built.rank), gamma_max, tail,
                   static_cast<double>(used.state_solves), static_cast<double>(used.adjoint_solves),
                   static_cast<double>(used.incremental_state_solves),
                   static_cast<double>(used.incremental_adjoint_solves)});
}

// sensitivity: value and gradient of both information-gain quantities at the
// nominal auxiliary parameters.
inline void cmd_sensitivity(const RunConfig& cfg, const std::string& out_dir = "") {
  const std::filesystem::path dir = detail::prepare_output(cfg, out_dir);
  BuiltProblem built = build_problem(cfg);
  const SensitivityReport rep =
      info_gain_gradient(built.ip, built.theta, built.rank, cfg.oversample, cfg.eig_seed);

  CsvWriter csv(dir / "sensitivity.csv", {"param", "value", "d_phi_ig", "d_phi_ig_bar"});
  for (int j = 0; j < built.theta.size(); ++j)
    csv.row({built.theta.names[static_cast<std::size_t>(j)]},
            {built.theta.values(j), rep.grad_phi_ig(j), rep.grad_phi_ig_bar(j)});

  CsvWriter summary(dir / "sensitivity_summary.csv",
                    {"phi_ig", "phi_ig_bar", "incremental_solves", "state_adjoint_solves"});
  summary.row({rep.phi_ig, rep.phi_ig_bar,
               static_cast<double>(rep.solve_counts.incremental_total()),
               static_cast<double>(rep.solve_counts.state_adjoint_total())});
}

// sweep: grid evaluation over one or two auxiliary parameters. Points are
// evaluated on private problem clones and emitted in grid order.
inline void cmd_sweep(const RunConfig& cfg, const std::string& out_dir = "") {
  if (!cfg.sweep.present) throw ConfigError("sweep: config has no sweep section");
  const std::filesystem::path dir = detail::prepare_output(cfg, out_dir);
  BuiltProblem built = build_problem(cfg);

  const int n_axes = static_cast<int>(cfg.sweep.params.size());
  std::vector<int> axis_index(static_cast<std::size_t>(n_axes));
  for (int a = 0; a < n_axes; ++a) {
    axis_index[static_cast<std::size_t>(a)] =
        built.theta.index_of(cfg.sweep.params[static_cast<std::size_t>(a)]);
    const int ai = axis_index[static_cast<std::size_t>(a)];
    if (cfg.sweep.ranges(a, 0) < built.theta.box(ai, 0) ||
        cfg.sweep.ranges(a, 1) > built.theta.box(ai, 1))
      throw ConfigError("sweep.ranges: axis '" + cfg.sweep.params[static_cast<std::size_t>(a)] +
                        "' leaves the theta box");
  }

  const int n0 = cfg.sweep.counts[0];
  const int n1 = n_axes == 2 ? cfg.sweep.counts[1] : 1;
  const int total = n0 * n1;
  auto axis_value = [&](int a, int i) {
    const double lo = cfg.sweep.ranges(a, 0), hi = cfg.sweep.ranges(a, 1);
    const int count = cfg.sweep.counts[static_cast<std::size_t>(a)];
    return lo + (hi - lo) * static_cast<double>(i) / (count - 1);
  };

  std::vector<SensitivityReport> reports(static_cast<std::size_t>(total));
  parallel_for(total, [&](int k) {
    const int i0 = k / n1;
    const int i1 = k % n1;
    ThetaVector theta = built.theta;
    theta.values(axis_index[0]) = axis_value(0, i0);
    if (n_axes == 2) theta.values(axis_index[1]) = axis_value(1, i1);
    const InverseProblem worker = built.ip.clone_for_worker();
    reports[static_cast<std::size_t>(k)] =
        info_gain_gradient(worker, theta, built.rank, cfg.oversample, cfg.eig_seed);
  });

  if (cfg.model == "twobytwo") {
    CsvWriter csv(dir / "sweep.csv", {"theta1", "theta2", "kld", "d_kld_d1", "d_kld_d2"});
    for (const auto& rep : reports)
      csv.row({rep.theta.values(0), rep.theta.values(1), rep.phi_ig, rep.grad_phi_ig(0),
               rep.grad_phi_ig(1)});
    return;
  }

  std::vector<std::string> columns;
  for (const auto& p : cfg.sweep.params) columns.push_back(p);
  columns.push_back("phi_ig");
  columns.push_back("phi_ig_bar");
  for (const auto& name : built.theta.names) columns.push_back("d_phi_ig_" + name);
  for (const auto& name : built.theta.names) columns.push_back("d_phi_ig_bar_" + name);
  CsvWriter csv(dir / "sweep.csv", columns);
  for (const auto& rep : reports) {
    std::vector<double> cells;
    for (int a = 0; a < n_axes; ++a) cells.push_back(rep.theta.values(axis_index[a]));
    cells.push_back(rep.phi_ig);
    cells.push_back(rep.phi_ig_bar);
    for (int j = 0; j < rep.theta.size(); ++j) cells.push_back(rep.grad_phi_ig(j));
    for (int j = 0; j < rep.theta.size(); ++j) cells.push_back(rep.grad_phi_ig_bar(j));
    csv.row(cells);
  }
}

// gsa: derivative-based upper bounds on the total Sobol indices over the
// relative-perturbation box around the nominal parameters.
inline void cmd_gsa(const RunConfig& cfg, const std::string& out_dir = "") {
  if (!cfg.gsa.present) throw ConfigError("gsa: config has no gsa section");
  const std::filesystem::path dir = detail::prepare_output(cfg, out_dir);
  BuiltProblem built = build_problem(cfg);

  const PerturbationMap pmap(cfg.theta_nominal, cfg.alpha);
  const DgsmReport rep = dgsm_bound(built.ip, cfg.theta_names, pmap, built.rank, cfg.oversample,
                                    cfg.eig_seed, cfg.gsa.n_samples, cfg.gsa.seed);

  CsvWriter csv(dir / "gsa.csv", {"parameter", "dgsm", "variance", "poincare", "bound"});
  for (int i = 0; i < pmap.size(); ++i)
    csv.row({cfg.theta_names[static_cast<std::size_t>(i)]},
            {rep.dgsm(i), rep.variance, rep.poincare(i), rep.bound(i)});
}

// ---------------------------------------------------------------------------
// verify: self-contained oracle suite, one row per check
// ---------------------------------------------------------------------------

namespace verify_detail {

struct Check {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool pass() const { return max_error <= tolerance; }
};

inline InverseProblem make_elliptic_problem(int n) {
  const EllipticSetup setup = build_elliptic(n, observation_lattice_3x3());
  InverseProblem ip;
  ip.model = setup.model;
  ip.prior = std::make_shared<GaussianPrior>(
      GaussianPrior::bilaplacian(setup.model->assembly(), Vec::Zero(setup.model->parameter_dim())));
  ip.data = synthesize_data(*setup.model, true_source(setup.model->mesh()), setup.theta, 0.01, 42);
  return ip;
}

inline InverseProblem make_twobytwo_problem(const TwoByTwoSetup& setup) {
  InverseProblem ip;
  ip.model = std::make_shared<TwoByTwoModel>();
  ip.prior = std::make_shared<GaussianPrior>(GaussianPrior::identity(2));
  ip.data.u_obs = setup.u_obs;
  ip.data.noise_var = Vec::Constant(2, setup.sigma * setup.sigma);
  return ip;
}

inline Check check_cg_dense() {
  const Mat g = rng::gaussian_matrix(20, 20, 7, 17);
  Mat a = g * g.transpose();
  a.diagonal().array() += 20.0;
  const Vec rhs = Vec::Ones(20);
  const Vec expected = Eigen::LLT<Mat>(a).solve(rhs);
  const Vec x = cg_solve(LinearOperatorHandle::from_dense(a), rhs, 1e-12, 400);
  return {"cg_vs_dense_factorization", (x - expected).norm() / expected.norm(), 1e-8};
}

inline Check check_eig_dense() {
  const Mat w = rng::gaussian_matrix(30, 5, 3, 23);
  const Mat a = w * w.transpose();
  const Mat gb = rng::gaussian_matrix(30, 30, 31, 17);
  Mat b = gb * gb.transpose();
  b.diagonal().array() += 30.0;
  const Mat b_inv = b.inverse();
  const LowRankSpectrum spec = eig_lowrank_generalized(
      LinearOperatorHandle::from_dense(a, Space::Parameter, Space::Dual, true),
      LinearOperatorHandle::from_dense(b, Space::Parameter, Space::Dual, true),
      LinearOperatorHandle::from_dense(b_inv, Space::Dual, Space::Parameter, true), 5, 10, 3);
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> dense(a, b);
  double err = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double want = dense.eigenvalues()(29 - i);
    err = std::max(err, std::abs(spec.gammas(i) - want) / std::max(1.0, want));
  }
  return {"randomized_eig_vs_dense_pencil", err, 1e-8};
}

inline Check check_twobytwo_closed_form() {
  double err = 0.0;
  for (double t1 : {0.1, 0.3, 0.5, 0.7, 0.9})
    for (double t2 : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      TwoByTwoSetup setup;
      setup.theta << t1, t2;
      const InverseProblem ip = make_twobytwo_problem(setup);
      const ThetaVector theta = twobytwo_theta(t1, t2);
      const LowRankSpectrum spec = lowrank_spectrum(ip, theta, 2, 0, 13);
      const double phi = information_gain(ip, spec, map_point(ip, spec, theta));
      const double want = kld_closed_form(setup);
      err = std::max(err, std::abs(phi - want) / std::max(1.0, std::abs(want)));
    }
  return {"twobytwo_pipeline_vs_closed_form", err, 1e-6};
}

inline Check check_twobytwo_gradient() {
  double err = 0.0;
  for (double t1 : {0.1, 0.5, 0.9})
    for (double t2 : {0.1, 0.5, 0.9}) {
      TwoByTwoSetup setup;
      setup.theta << t1, t2;
      const InverseProblem ip = make_twobytwo_problem(setup);
      const ThetaVector theta = twobytwo_theta(t1, t2);
      const SensitivityReport rep = info_gain_gradient(ip, theta, 2, 0, 13);
      const FdGradient2 ref = kld_gradient_reference(setup, 1e-3);
      for (int j = 0; j < 2; ++j)
        err = std::max(err, std::abs(rep.grad_phi_ig(j) - ref.grad(j)) /
                                std::max(1.0, std::abs(ref.grad(j))));
    }
  return {"twobytwo_gradient_vs_fd_reference", err, 1e-5};
}

// Qualitative structure of the gradient-magnitude fields over the unit box,
// asserted as band-mean inequalities and a monotone tail on a 50x50 sweep of
// the closed-form reference model:
//   - |d kld/d theta1| is small along the left edge and large on the middle-
//     right ridge;
//   - past the ridge it decays monotonically in theta1 along every row;
//   - |d kld/d theta2| is quiet in the horizontal band theta2 ~ 0.5 and loud
//     near both horizontal edges.
inline Check check_twobytwo_sweep_bands() {
  const int n = 50;
  Mat d1(n, n), d2(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      TwoByTwoSetup setup;
      setup.theta << static_cast<double>(i) / (n - 1), static_cast<double>(j) / (n - 1);
      const InverseProblem ip = make_twobytwo_problem(setup);
      const ThetaVector theta = twobytwo_theta(setup.theta(0), setup.theta(1));
      const SensitivityReport rep = info_gain_gradient(ip, theta, 2, 0, 13);
      d1(i, j) = std::abs(rep.grad_phi_ig(0));
      d2(i, j) = std::abs(rep.grad_phi_ig(1));
    }

  auto band_mean_rows = [&](const Mat& f, double lo, double hi) {
    double acc = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / (n - 1);
      if (t < lo || t > hi) continue;
      acc += f.row(i).mean();
      ++count;
    }
    return acc / count;
  };
  auto band_mean_cols = [&](const Mat& f, double lo, double hi) {
    double acc = 0.0;
    int count = 0;
    for (int j = 0; j < n; ++j) {
      const double t = static_cast<double>(j) / (n - 1);
      if (t < lo || t > hi) continue;
      acc += f.col(j).mean();
      ++count;
    }
    return acc / count;
  };

  int violations = 0;
  if (!(band_mean_rows(d1, 0.0, 0.1) < 0.5 * band_mean_rows(d1, 0.55, 0.75))) ++violations;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i + 1 < n; ++i) {
      const double t = static_cast<double>(i) / (n - 1);
      if (t < 0.72) continue;
      if (d1(i + 1, j) > d1(i, j) + 1e-9) {
        ++violations;
        break;
      }
    }
  if (!(band_mean_cols(d2, 0.45, 0.55) < 0.5 * band_mean_cols(d2, 0.0, 0.1))) ++violations;
  if (!(band_mean_cols(d2, 0.45, 0.55) < 0.5 * band_mean_cols(d2, 0.9, 1.0))) ++violations;
  return {"twobytwo_sweep_band_structure", static_cast<double>(violations), 0.0};
}

inline Check check_elliptic_dense(Check* spectrum_check, Check* map_check) {
  const InverseProblem ip = make_elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();
  const LowRankSpectrum spec = lowrank_spectrum(ip, theta, 9, 0, 3);
  const Vec m_post = map_point(ip, spec, theta);
  const double phi = information_gain(ip, spec, m_post);
  const double phi_bar = expected_information_gain(spec);

  const oracle::DenseProblem dp = oracle::build_dense_problem(ip, theta);
  const oracle::DenseKldResult dense = oracle::dense_kld(dp, ip.data.u_obs);

  double gamma_err = 0.0;
  for (int i = 0; i < spec.rank(); ++i)
    gamma_err = std::max(gamma_err, std::abs(spec.gammas(i) - dense.gammas(i)) /
                                        std::max(1.0, dense.gammas(i)));
  *spectrum_check = {"elliptic_spectrum_vs_dense", gamma_err, 1e-8};
  *map_check = {"elliptic_map_vs_dense",
                (m_post - dense.m_post).norm() / std::max(1.0, dense.m_post.norm()), 1e-8};
  const double phi_err =
      std::max(std::abs(phi - dense.phi_ig) / std::max(1.0, std::abs(dense.phi_ig)),
               std::abs(phi_bar - dense.phi_ig_bar) / std::max(1.0, std::abs(dense.phi_ig_bar)));
  return {"elliptic_information_gain_vs_dense", phi_err, 1e-10};
}

inline Check check_flux_independence() {
  const InverseProblem ip = make_elliptic_problem(16);
  double err = 0.0;
  for (double g : {0.05, 0.15, 0.3, 0.4, 0.5}) {
    const ThetaVector theta = elliptic_theta(1.0, g);
    const SensitivityReport rep = info_gain_gradient(ip, theta, 9, 0, 3);
    err = std::max(err, std::abs(rep.grad_phi_ig_bar(1)));
  }
  return {"expected_information_gain_flux_independence", err, 1e-10};
}

inline Check check_elliptic_gradient_fd() {
  const InverseProblem ip = make_elliptic_problem(8);
  const ThetaVector theta = elliptic_theta();
  const SensitivityReport rep = info_gain_gradient(ip, theta, 9, 0, 3);
  auto phi = [&](const Vec& tv) {
    ThetaVector t = theta;
    t.values = tv;
    const LowRankSpectrum spec = lowrank_spectrum(ip, t, 9, 0, 3);
    return information_gain(ip, spec, map_point(ip, spec, t));
  };
  Mat box(2, 2);
  box << 0.5, 2.0, 0.02, 0.5;
  const Vec fd = oracle::fd_gradient(phi, theta.values, 1e-4, &box);
  double err = 0.0;
  for (int j = 0; j < 2; ++j)
    err = std::max(err, std::abs(rep.grad_phi_ig(j) - fd(j)) / std::max(1.0, std::abs(fd(j))));
  return {"elliptic_gradient_vs_fd", err, 1e-4};
}

inline Check check_solve_budget() {
  const InverseProblem ip = make_elliptic_problem(16);
  const ThetaVector theta = elliptic_theta();
  const SensitivityReport rep = info_gain_gradient(ip, theta, 9, 0, 3);
  const long budget_inc = 2 * 9 + 2 * 2 + 6;
  const double over_inc =
      std::max(0.0, static_cast<double>(rep.solve_counts.incremental_total() - budget_inc));
  const double over_sa =
      std::max(0.0, static_cast<double>(rep.solve_counts.state_adjoint_total() - 4));
  return {"solve_budget", over_inc + over_sa, 0.0};
}

inline Check check_sobol_bound() {
  TwoByTwoSetup setup;
  const InverseProblem ip = make_twobytwo_problem(setup);
  const PerturbationMap pmap(Vec::Constant(2, 0.5), 0.8);
  const DgsmReport rep = dgsm_bound(ip, {"theta1", "theta2"}, pmap, 2, 0, 13, 200, 11);

  auto phi_unit = [&](const Vec& unit) {
    TwoByTwoSetup probe = setup;
    probe.theta = pmap.to_physical(unit);
    return kld_closed_form(probe);
  };
  const auto pf = oracle::pick_freeze_total_sobol(phi_unit, Vec::Constant(2, -1.0),
                                                  Vec::Constant(2, 1.0), 20000, 7);
  double slack = 0.0;
  for (int i = 0; i < 2; ++i)
    slack = std::max(slack, pf.s_tot(i) - 3.0 * pf.std_err(i) - rep.bound(i));
  return {"sobol_bound_dominates_pick_freeze", std::max(0.0, slack), 0.0};
}

}  // namespace verify_detail

// verify: runs the oracle suite; returns the number of failing checks.
inline int cmd_verify(const RunConfig& cfg, const std::string& out_dir = "") {
  using verify_detail::Check;
  const std::filesystem::path dir = detail::prepare_output(cfg, out_dir);

  std::vector<Check> checks;
  checks.push_back(verify_detail::check_cg_dense());
  checks.push_back(verify_detail::check_eig_dense());
  checks.push_back(verify_detail::check_twobytwo_closed_form());
  checks.push_back(verify_detail::check_twobytwo_gradient());
  checks.push_back(verify_detail::check_twobytwo_sweep_bands());
  Check spectrum_check, map_check;
  checks.push_back(verify_detail::check_elliptic_dense(&spectrum_check, &map_check));
  checks.push_back(spectrum_check);
  checks.push_back(map_check);
  checks.push_back(verify_detail::check_flux_independence());
  checks.push_back(verify_detail::check_elliptic_gradient_fd());
  checks.push_back(verify_detail::check_solve_budget());
  checks.push_back(verify_detail::check_sobol_bound());

  CsvWriter csv(dir / "verify.csv", {"check_name", "max_error", "tolerance", "pass"});
  int failures = 0;
  for (const auto& c : checks) {
    csv.row({c.name}, {c.max_error, c.tolerance, c.pass() ? 1.0 : 0.0});
    if (!c.pass()) ++failures;
  }
  return failures;
}

}  // namespace igsense
