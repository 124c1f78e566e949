#pragma once

// Gaussian-process regression with a Matérn-5/2 ARD kernel.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "pmuclass/error.hpp"
#include "pmuclass/rng.hpp"

namespace pmuclass {

/// Kernel hyperparameters, in standardized-target units.
struct KernelParams {
  std::vector<double> length_scales;
  double signal_variance = 1.0;
  double noise_variance = 1e-6;
};

inline constexpr double kNoiseFloor = 1e-10;
inline constexpr double kMaxJitter = 1e-6;

struct GpFitOptions {
  /// Fixed hyperparameters. When unset they are fitted by maximizing the log
  /// marginal likelihood (five or more points) or take the defaults below.
  std::optional<KernelParams> kernel;
  double default_length_scale = 0.5;
  int restarts = 5;
  int max_iterations = 200;
  std::uint64_t seed = 0;
  // Search box for fitted hyperparameters.
  double min_length_scale = 1e-2, max_length_scale = 1e1;
  double min_signal_variance = 1e-2, max_signal_variance = 1e2;
  double max_noise_variance = 1.0;
};

inline double matern52(double r) {
  const double s = std::sqrt(5.0) * r;
  return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

/// Posterior mean and standard deviation of the latent function, in the
/// units of the training targets.
struct Posterior {
  double mean = 0;
  double std = 0;
};

class GpSurrogate {
 public:
  GpSurrogate(Eigen::MatrixXd x, const Eigen::VectorXd& y, KernelParams kernel) : x_(std::move(x)) {
    if (x_.rows() != y.size()) throw Error(Errc::DimMismatch, "X rows and y length differ");
    if (x_.rows() < 1) throw Error(Errc::InsufficientData, "no training points");
    if (static_cast<Eigen::Index>(kernel.length_scales.size()) != x_.cols())
      throw Error(Errc::DimMismatch, "one length scale per input dimension is required");
    y_mean_ = y.mean();
    const double var = (y.array() - y_mean_).square().mean();
    y_scale_ = var > 0 ? std::sqrt(var) : 1.0;
    y_ = (y.array() - y_mean_) / y_scale_;
    kernel_ = std::move(kernel);
    kernel_.noise_variance = std::max(kernel_.noise_variance, kNoiseFloor);
    factorize();
  }

  const KernelParams& kernel() const { return kernel_; }
  const Eigen::MatrixXd& inputs() const { return x_; }
  double jitter() const { return jitter_; }
  double prior_mean() const { return y_mean_; }
  double target_scale() const { return y_scale_; }
  /// Signal and noise variance converted back to target units.
  double signal_variance() const { return kernel_.signal_variance * y_scale_ * y_scale_; }
  double noise_variance() const { return (kernel_.noise_variance + jitter_) * y_scale_ * y_scale_; }
  const Eigen::MatrixXd& cholesky_factor() const { return chol_; }

  double kernel_value(const double* a, const double* b) const {
    double r2 = 0;
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      const double d = (a[j] - b[j]) / kernel_.length_scales[j];
      r2 += d * d;
    }
    return kernel_.signal_variance * matern52(std::sqrt(r2));
  }

  /// Training covariance K + (noise + jitter) I in standardized units.
  Eigen::MatrixXd covariance(double extra_diagonal) const {
    const Eigen::Index n = x_.rows();
    const Eigen::MatrixXd xt = x_.transpose();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = kernel_value(xt.col(i).data(), xt.col(j).data());
      k(i, i) += kernel_.noise_variance + extra_diagonal;
    }
    return k;
  }

  /// Standardized log marginal likelihood of the training targets.
  double log_marginal_likelihood() const {
    return -0.5 * y_.dot(alpha_) - chol_.diagonal().array().log().sum() -
           0.5 * static_cast<double>(y_.size()) * std::log(2 * std::numbers::pi);
  }

  Posterior posterior(const std::vector<double>& x) const {
    Eigen::MatrixXd q(1, x_.cols());
    for (Eigen::Index j = 0; j < x_.cols(); ++j) q(0, j) = x.at(static_cast<std::size_t>(j));
    return posterior_batch(q).front();
  }

  /// Posterior at each row of `queries`.
  std::vector<Posterior> posterior_batch(const Eigen::MatrixXd& queries) const {
    if (queries.cols() != x_.cols()) throw Error(Errc::DimMismatch, "query dimension mismatch");
    const Eigen::Index n = x_.rows(), m = queries.rows();
    const Eigen::MatrixXd xt = x_.transpose();
    const Eigen::MatrixXd qt = queries.transpose();
    Eigen::MatrixXd ks(n, m);
    for (Eigen::Index c = 0; c < m; ++c)
      for (Eigen::Index i = 0; i < n; ++i) ks(i, c) = kernel_value(xt.col(i).data(), qt.col(c).data());
    const Eigen::VectorXd mean = ks.transpose() * alpha_;
    const Eigen::MatrixXd v = chol_.triangularView<Eigen::Lower>().solve(ks);
    const Eigen::VectorXd explained = v.colwise().squaredNorm().transpose();
    std::vector<Posterior> out(static_cast<std::size_t>(m));
    for (Eigen::Index c = 0; c < m; ++c) {
      const double var = std::max(kernel_.signal_variance - explained(c), 0.0);
      out[c] = {y_mean_ + y_scale_ * mean(c), y_scale_ * std::sqrt(var)};
    }
    return out;
  }

 private:
  void factorize() {
    for (double jitter = 0;;) {
      Eigen::LLT<Eigen::MatrixXd> llt(covariance(jitter));
      if (llt.info() == Eigen::Success) {
        chol_ = llt.matrixL();
        jitter_ = jitter;
        break;
      }
      if (jitter >= kMaxJitter) throw Error(Errc::SingularKernel, "kernel matrix not positive definite");
      jitter = jitter == 0 ? 1e-10 : jitter * 10;
    }
    alpha_ = chol_.triangularView<Eigen::Lower>().solve(y_);
    chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);
  }

  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  double y_mean_ = 0, y_scale_ = 1;
  KernelParams kernel_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0;
};

namespace detail {

struct LmlProblem {
  const Eigen::MatrixXd* x;
  const Eigen::VectorXd* y;
  const GpFitOptions* opt;

  KernelParams unpack(const gsl_vector* theta) const {
    const auto d = static_cast<std::size_t>(x->cols());
    KernelParams k;
    for (std::size_t j = 0; j < d; ++j) {
      k.length_scales.push_back(
          std::clamp(std::exp(gsl_vector_get(theta, j)), opt->min_length_scale, opt->max_length_scale));
    }
    k.signal_variance =
        std::clamp(std::exp(gsl_vector_get(theta, d)), opt->min_signal_variance, opt->max_signal_variance);
    k.noise_variance = std::clamp(std::exp(gsl_vector_get(theta, d + 1)), kNoiseFloor, opt->max_noise_variance);
    return k;
  }

  static double negative_lml(const gsl_vector* theta, void* self) {
    const auto* p = static_cast<const LmlProblem*>(self);
    try {
      return -GpSurrogate(*p->x, *p->y, p->unpack(theta)).log_marginal_likelihood();
    } catch (const Error&) {
      return 1e300;
    }
  }
};

}  // namespace detail

/// Fits the surrogate. Hyperparameters come from `opt.kernel`, from a
/// multi-start Nelder-Mead search over log hyperparameters (n >= 5), or
/// from the defaults.
inline GpSurrogate gp_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpFitOptions& opt = {}) {
  if (x.rows() < 2) throw Error(Errc::InsufficientData, "at least two observations are required");
  if (opt.kernel) return GpSurrogate(x, y, *opt.kernel);
  const auto d = static_cast<std::size_t>(x.cols());
  KernelParams defaults{std::vector<double>(d, opt.default_length_scale), 1.0, 1e-6};
  if (x.rows() < 5) return GpSurrogate(x, y, defaults);

  detail::LmlProblem problem{&x, &y, &opt};
  gsl_multimin_function f{&detail::LmlProblem::negative_lml, d + 2, &problem};
  gsl_vector* theta = gsl_vector_alloc(d + 2);
  gsl_vector* step = gsl_vector_alloc(d + 2);
  gsl_vector_set_all(step, 1.0);
  gsl_multimin_fminimizer* nm = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, d + 2);

  Rng rng(sub_seed(opt.seed, "gp-restarts"));
  KernelParams best = defaults;
  double best_value = 1e300;
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      gsl_vector_set(theta, j, r == 0 ? std::log(opt.default_length_scale)
                                      : uniform(rng, std::log(opt.min_length_scale), std::log(opt.max_length_scale)));
    }
    gsl_vector_set(theta, d, r == 0 ? 0.0 : uniform(rng, std::log(0.1), std::log(10.0)));
    gsl_vector_set(theta, d + 1, r == 0 ? std::log(1e-6) : uniform(rng, std::log(1e-8), std::log(1e-1)));
    gsl_multimin_fminimizer_set(nm, &f, theta, step);
    for (int it = 0; it < opt.max_iterations; ++it) {
      if (gsl_multimin_fminimizer_iterate(nm) != GSL_SUCCESS) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(nm), 1e-4) == GSL_SUCCESS) break;
    }
    const double value = gsl_multimin_fminimizer_minimum(nm);
    if (value < best_value) {
      best_value = value;
      best = problem.unpack(gsl_multimin_fminimizer_x(nm));
    }
  }
  gsl_multimin_fminimizer_free(nm);
  gsl_vector_free(step);
  gsl_vector_free(theta);
  return GpSurrogate(x, y, best);
}

}  // namespace pmuclass
