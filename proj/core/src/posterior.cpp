#include "bgr/posterior.hpp"

namespace bgr {

void GaussianPosterior::validate() const {
  mu.require_layout(rho);
  for (double v : mu.values)
    if (!std::isfinite(v)) throw std::runtime_error("posterior mu: non-finite values");
  for (double v : rho.values)
    if (!std::isfinite(v)) throw std::runtime_error("posterior rho: non-finite values");
}

GaussianPosterior init_prior(const MlpArchitecture& arch, const PriorSpec& spec) {
  if (spec.std <= 0.0) throw std::runtime_error("prior std must be positive");
  auto layout = make_layout(arch);
  GaussianPosterior q;
  q.mu = ParamVector::zeros(layout);
  q.rho = ParamVector::zeros(layout);
  const double rho = softplus_inv(spec.std);
  for (std::size_t i = 0; i < q.mu.size(); ++i) {
    q.mu.values[i] = spec.mean;
    q.rho.values[i] = rho;
  }
  return q;
}

GaussianPosterior init_training_posterior(const MlpArchitecture& arch, Rng& rng) {
  auto layout = make_layout(arch);
  GaussianPosterior q;
  q.mu = ParamVector::zeros(layout);
  q.rho = ParamVector::zeros(layout);

  // fan-in of a bias segment is the fan-in of its layer's weight matrix
  std::size_t layer_fan_in = arch.input_dim;
  for (const auto& seg : layout->segments) {
    if (!seg.bias) layer_fan_in = seg.rows;
    const double std = std::sqrt(2.0 / static_cast<double>(layer_fan_in));
    for (std::size_t i = seg.offset; i < seg.offset + seg.length; ++i)
      q.mu.values[i] = std * rng.normal();
  }
  for (double& r : q.rho.values) r = -6.0;
  return q;
}

ParamSample sample_params(const GaussianPosterior& q, Rng& rng) {
  q.validate();
  ParamSample s;
  s.theta = ParamVector::zeros(q.mu.layout);
  s.eps = ParamVector::zeros(q.mu.layout);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double e = rng.normal();
    s.eps.values[i] = e;
    s.theta.values[i] = q.mu.values[i] + softplus(q.rho.values[i]) * e;
  }
  return s;
}

double kl_divergence(const GaussianPosterior& q, const GaussianPosterior& p) {
  q.mu.require_layout(p.mu);
  q.rho.require_layout(p.rho);
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double sq = softplus(q.rho.values[i]);
    const double sp = softplus(p.rho.values[i]);
    const double dm = q.mu.values[i] - p.mu.values[i];
    kl += std::log(sp / sq) + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
  }
  return kl;
}

VariationalGrad kl_gradients(const GaussianPosterior& q, const GaussianPosterior& p) {
  q.mu.require_layout(p.mu);
  q.rho.require_layout(p.rho);
  VariationalGrad g;
  g.mu = ParamVector::zeros(q.mu.layout);
  g.rho = ParamVector::zeros(q.mu.layout);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double sq = softplus(q.rho.values[i]);
    const double sp = softplus(p.rho.values[i]);
    const double dm = q.mu.values[i] - p.mu.values[i];
    g.mu.values[i] = dm / (sp * sp);
    const double dkl_dsigma = -1.0 / sq + sq / (sp * sp);
    g.rho.values[i] = dkl_dsigma * logistic(q.rho.values[i]);
  }
  return g;
}

VariationalGrad reparam_backward(const ParamVector& grad_theta, const ParamVector& eps,
                                 const ParamVector& rho) {
  grad_theta.require_layout(eps);
  grad_theta.require_layout(rho);
  VariationalGrad g;
  g.mu = grad_theta;
  g.rho = ParamVector::zeros(rho.layout);
  for (std::size_t i = 0; i < grad_theta.size(); ++i)
    g.rho.values[i] = grad_theta.values[i] * eps.values[i] * logistic(rho.values[i]);
  return g;
}

ParamVector posterior_mean(const GaussianPosterior& q) { return q.mu; }

}  // namespace bgr
