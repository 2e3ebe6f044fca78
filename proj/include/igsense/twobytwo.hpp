#pragma once

// Two-dimensional analytic inverse problem used as an exact end-to-end
// oracle. The forward map is u = F(theta) m with
//
//   F(theta) = [ theta2      theta1    ]
//              [ theta1      1 - theta2 ],
//
// identity prior, and isotropic noise sigma^2 I. Posterior mean/covariance,
// the information gain, and its finite-difference gradient all have closed
// forms here; the generic pipeline must reproduce them.
//
// As a ForwardModel the state space is R^2 with a(p, u) = -p'u,
// c(p, m) = p'F(theta)m and d = 0, so u = F(theta) m runs through the same
// solve machinery as the PDE models.

#include <array>
#include <cmath>

#include "igsense/core.hpp"
#include "igsense/model.hpp"

namespace igsense {

struct TwoByTwoSetup {
  Eigen::Vector2d u_obs{0.15, 0.05};
  double sigma = 0.1;
  Eigen::Vector2d theta{0.0, 0.0};
};

inline Eigen::Matrix2d twobytwo_forward_matrix(double theta1, double theta2) {
  Eigen::Matrix2d f;
  f << theta2, theta1, theta1, 1.0 - theta2;
  return f;
}

inline Eigen::Matrix2d twobytwo_forward_dtheta(int j) {
  Eigen::Matrix2d df;
  if (j == 0)
    df << 0, 1, 1, 0;
  else if (j == 1)
    df << 1, 0, 0, -1;
  else
    throw IndexOutOfRange("twobytwo: theta index " + std::to_string(j));
  return df;
}

struct GaussianPosterior2 {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
};

// C_post = (sigma^-2 F'F + I)^-1,  m_post = sigma^-2 C_post F' u_obs.
inline GaussianPosterior2 posterior_closed_form(const TwoByTwoSetup& s) {
  if (!(s.sigma > 0.0)) throw ConfigError("twobytwo: sigma must be positive");
  const Eigen::Matrix2d f = twobytwo_forward_matrix(s.theta(0), s.theta(1));
  const double is2 = 1.0 / (s.sigma * s.sigma);
  const Eigen::Matrix2d precision = is2 * f.transpose() * f + Eigen::Matrix2d::Identity();
  GaussianPosterior2 post;
  post.cov = precision.inverse();
  post.mean = is2 * post.cov * f.transpose() * s.u_obs;
  return post;
}

// Information gain of the posterior over the identity prior:
// 1/2 [ log det(C_post^-1) + tr(C_post) - 2 + |m_post|^2 ].
inline double kld_closed_form(const TwoByTwoSetup& s) {
  const GaussianPosterior2 post = posterior_closed_form(s);
  const Eigen::Matrix2d precision = post.cov.inverse();
  return 0.5 * (std::log(precision.determinant()) + post.cov.trace() - 2.0 +
                post.mean.squaredNorm());
}

struct FdGradient2 {
  Eigen::Vector2d grad;
  std::array<bool, 2> clamped{false, false};  // one-sided difference was used
};

// Finite-difference reference gradient of the closed-form information gain,
// Richardson-extrapolated over {h, h/2}. Steps that would leave [0, 1] fall
// back to a second-order one-sided difference.
inline FdGradient2 kld_gradient_reference(const TwoByTwoSetup& s, double h) {
  if (!(h > 0.0 && h <= 1e-2)) throw std::invalid_argument("kld_gradient_reference: h in (0, 1e-2]");
  FdGradient2 out;
  for (int j = 0; j < 2; ++j) {
    auto phi = [&](double t) {
      TwoByTwoSetup probe = s;
      probe.theta(j) = t;
      return kld_closed_form(probe);
    };
    const double t0 = s.theta(j);
    auto diff = [&](double step) {
      if (t0 - step < 0.0) {
        out.clamped[static_cast<std::size_t>(j)] = true;
        return (-3.0 * phi(t0) + 4.0 * phi(t0 + step) - phi(t0 + 2.0 * step)) / (2.0 * step);
      }
      if (t0 + step > 1.0) {
        out.clamped[static_cast<std::size_t>(j)] = true;
        return (3.0 * phi(t0) - 4.0 * phi(t0 - step) + phi(t0 - 2.0 * step)) / (2.0 * step);
      }
      return (phi(t0 + step) - phi(t0 - step)) / (2.0 * step);
    };
    const double d1 = diff(h);
    const double d2 = diff(h / 2.0);
    out.grad(j) = (4.0 * d2 - d1) / 3.0;
  }
  return out;
}

class TwoByTwoModel : public ForwardModel {
 public:
  int state_dim() const override { return 2; }
  int parameter_dim() const override { return 2; }
  int n_obs() const override { return 2; }
  int n_theta() const override { return 2; }

  std::shared_ptr<ForwardModel> clone() const override {
    return std::make_shared<TwoByTwoModel>(*this);
  }

  Vec state_op_apply(const Vec& u, const ThetaVector&) const override { return -u; }
  Vec state_op_apply_transpose(const Vec& p, const ThetaVector&) const override { return -p; }
  Vec state_op_solve(const Vec& rhs, const ThetaVector&) const override { return -rhs; }
  Vec state_op_solve_transpose(const Vec& rhs, const ThetaVector&) const override { return -rhs; }

  Vec c_apply(const Vec& m, const ThetaVector& theta) const override {
    return twobytwo_forward_matrix(theta.values(0), theta.values(1)) * m;
  }
  Vec c_apply_transpose(const Vec& p, const ThetaVector& theta) const override {
    return twobytwo_forward_matrix(theta.values(0), theta.values(1)).transpose() * p;
  }
  Vec d_vector(const ThetaVector&) const override { return Vec::Zero(2); }

  Vec a_dtheta_apply(int j, const Vec& u, const ThetaVector&) const override {
    check_j(j);
    return Vec::Zero(u.size());
  }
  Vec a_dtheta_apply_transpose(int j, const Vec& p, const ThetaVector&) const override {
    check_j(j);
    return Vec::Zero(p.size());
  }
  Vec c_dtheta_apply(int j, const Vec& m, const ThetaVector&) const override {
    return twobytwo_forward_dtheta(j) * m;
  }
  Vec c_dtheta_apply_transpose(int j, const Vec& p, const ThetaVector&) const override {
    return twobytwo_forward_dtheta(j).transpose() * p;
  }
  Vec d_dtheta_vector(int j, const ThetaVector&) const override {
    check_j(j);
    return Vec::Zero(2);
  }

  Vec observe(const Vec& u) const override { return u; }
  Vec observe_adjoint(const Vec& w) const override { return w; }

 private:
  void check_j(int j) const {
    if (j < 0 || j >= 2) throw IndexOutOfRange("twobytwo: theta index " + std::to_string(j));
  }
};

inline ThetaVector twobytwo_theta(double t1 = 0.5, double t2 = 0.5) {
  Mat box(2, 2);
  box << 0.0, 1.0, 0.0, 1.0;
  Vec values(2);
  values << t1, t2;
  Vec nominal(2);
  nominal << 0.5, 0.5;
  return ThetaVector::make(values, {"theta1", "theta2"}, nominal, box);
}

}  // namespace igsense
