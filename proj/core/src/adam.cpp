#include "bgr/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace bgr {

Adam::Adam(AdamConfig config, std::size_t n) : config_(config) {
  if (!(config.lr > 0.0)) throw std::runtime_error("adam lr must be positive");
  if (config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 ||
      config.beta2 >= 1.0)
    throw std::runtime_error("adam betas must lie in [0,1)");
  m_.assign(n, 0.0);
  v_.assign(n, 0.0);
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::runtime_error("dimension mismatch: adam step");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
  }
}

void Adam::restore(std::size_t t, std::vector<double> m, std::vector<double> v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw std::runtime_error("dimension mismatch: adam restore");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace bgr
