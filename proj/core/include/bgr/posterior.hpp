#pragma once

#include <cmath>
#include <utility>

#include "bgr/mlp.hpp"
#include "bgr/rng.hpp"

namespace bgr {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// inverse of softplus; defined for y > 0
inline double softplus_inv(double y) {
  return y > 20.0 ? y : std::log(std::expm1(y));
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct PriorSpec {
  double mean = 0.0;
  double std = 1.0;
};

// Mean-field Gaussian over the flat parameter vector: sigma_i = softplus(rho_i).
struct GaussianPosterior {
  ParamVector mu;
  ParamVector rho;

  double sigma(std::size_t i) const { return softplus(rho.values[i]); }
  std::size_t size() const { return mu.size(); }
  void validate() const;
};

GaussianPosterior init_prior(const MlpArchitecture& arch, const PriorSpec& spec);

// Task-1 starting point: He-style mu (std sqrt(2/fan_in) per layer), rho = -6,
// so the network trains near-deterministically at first.
GaussianPosterior init_training_posterior(const MlpArchitecture& arch, Rng& rng);

// theta_i = mu_i + softplus(rho_i) * eps_i with eps ~ N(0, I). eps is returned
// so gradients can be routed back through the draw.
struct ParamSample {
  ParamVector theta;
  ParamVector eps;
};
ParamSample sample_params(const GaussianPosterior& q, Rng& rng);

double kl_divergence(const GaussianPosterior& q, const GaussianPosterior& p);

struct VariationalGrad {
  ParamVector mu;
  ParamVector rho;
};

// Analytic partials of kl_divergence with respect to q's mu and rho.
VariationalGrad kl_gradients(const GaussianPosterior& q, const GaussianPosterior& p);

// Chain rule through the reparametrized draw:
//   grad_mu = grad_theta, grad_rho_i = grad_theta_i * eps_i * logistic(rho_i)
VariationalGrad reparam_backward(const ParamVector& grad_theta, const ParamVector& eps,
                                 const ParamVector& rho);

ParamVector posterior_mean(const GaussianPosterior& q);

}  // namespace bgr
