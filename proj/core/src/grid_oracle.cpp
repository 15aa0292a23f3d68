#include "bgr/grid_oracle.hpp"

#include <cmath>

namespace bgr {
namespace {

double logsumexp(const std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

void require_dist(const std::vector<double>& p, const char* what) {
  double s = 0.0;
  for (double v : p) {
    if (v < 0.0) throw std::runtime_error(std::string(what) + ": negative probability");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-12)
    throw std::runtime_error(std::string(what) + ": does not sum to 1");
}

}  // namespace

void GridEbmSpec::validate() const {
  if (x_grid.rank() != 2) throw std::runtime_error("dimension mismatch: grid rank");
  if (classes < 1) throw std::runtime_error("grid needs at least one class");
}

Tensor GridEbmSpec::row(std::size_t i) const {
  Tensor r = Tensor::zeros({1, x_grid.cols()});
  for (std::size_t c = 0; c < x_grid.cols(); ++c) r.at(0, c) = x_grid.at(i, c);
  return r;
}

double exact_log_partition(const ParamEnergy& fn, const ParamVector& theta,
                           const GridEbmSpec& grid) {
  grid.validate();
  Tensor logits = fn.batch(theta, grid.x_grid)->logits();
  return logsumexp(logits.data);
}

double exact_grid_logp(const ParamEnergy& fn, const ParamVector& theta,
                       const GridEbmSpec& grid, const Tensor& x) {
  grid.validate();
  if (x.rank() != 2 || x.rows() != 1 || x.cols() != grid.x_grid.cols())
    throw std::runtime_error("dimension mismatch: query point");
  bool found = false;
  for (std::size_t i = 0; i < grid.x_grid.rows() && !found; ++i) {
    bool eq = true;
    for (std::size_t c = 0; c < grid.x_grid.cols(); ++c)
      if (grid.x_grid.at(i, c) != x.at(0, c)) { eq = false; break; }
    found = eq;
  }
  if (!found) throw std::runtime_error("x not on grid");
  Tensor logits = fn.batch(theta, x)->logits();
  return logsumexp(logits.data) - exact_log_partition(fn, theta, grid);
}

double exact_joint_logp(const ParamEnergy& fn, const ParamVector& theta,
                        const GridEbmSpec& grid, std::size_t i, std::size_t c) {
  Tensor logits = fn.batch(theta, grid.row(i))->logits();
  return logits.at(0, c) - exact_log_partition(fn, theta, grid);
}

ParamVector exact_model_expectation(const ParamEnergy& fn, const ParamVector& theta,
                                    const GridEbmSpec& grid) {
  grid.validate();
  auto b = fn.batch(theta, grid.x_grid);
  const Tensor& logits = b->logits();
  const double log_z = logsumexp(logits.data);
  Tensor weights = Tensor::zeros(logits.shape);  // weights[i][c] = p(x_i, y=c)
  for (std::size_t i = 0; i < weights.data.size(); ++i)
    weights.data[i] = std::exp(logits.data[i] - log_z);
  return b->backward(weights);
}

ParamVector exact_cd_joint_grad(const ParamEnergy& fn, const ParamVector& theta,
                                const GridEbmSpec& grid, const LabeledBatch& data) {
  if (!is_one_hot(data.y)) throw std::runtime_error("labels must be one-hot");
  Tensor mean_y = data.y;
  for (double& v : mean_y.data) v /= static_cast<double>(data.y.rows());
  ParamVector g = fn.batch(theta, data.x)->backward(mean_y);
  add_scaled(g, exact_model_expectation(fn, theta, grid), -1.0);
  return g;
}

ParamVector exact_logpx_grad(const ParamEnergy& fn, const ParamVector& theta,
                             const GridEbmSpec& grid, const Tensor& x_batch) {
  auto b = fn.batch(theta, x_batch);
  Tensor probs = conditional_probs(b->logits());
  for (double& v : probs.data) v /= static_cast<double>(x_batch.rows());
  ParamVector g = b->backward(probs);
  add_scaled(g, exact_model_expectation(fn, theta, grid), -1.0);
  return g;
}

VariationalGrad exact_bgr_total_grad(const ParamEnergy& fn, const GaussianPosterior& q_t,
                                     const GaussianPosterior& q_prev,
                                     const ParamSample& model_sample,
                                     const LabeledBatch& data_batch,
                                     const GridEbmSpec& grid, double gamma,
                                     double kl_scale, const SegmentMask* kl_mask) {
  ParamVector grad_theta = nll_grad(fn, model_sample.theta, data_batch.x, data_batch.y);
  if (gamma != 0.0) {
    add_scaled(grad_theta, exact_model_expectation(fn, model_sample.theta, grid), gamma);
    Tensor mean_y = data_batch.y;
    for (double& v : mean_y.data) v /= static_cast<double>(data_batch.y.rows());
    add_scaled(grad_theta, fn.batch(model_sample.theta, data_batch.x)->backward(mean_y),
               -gamma);
  }
  VariationalGrad g = reparam_backward(grad_theta, model_sample.eps, q_t.rho);
  if (kl_scale != 0.0) {
    VariationalGrad kg = kl_gradients(q_t, q_prev);
    if (kl_mask) {
      zero_unmasked(kg.mu, *kl_mask);
      zero_unmasked(kg.rho, *kl_mask);
    }
    add_scaled(g.mu, kg.mu, kl_scale);
    add_scaled(g.rho, kg.rho, kl_scale);
  }
  return g;
}

void DiscreteCausalJoint::validate() const {
  require_dist(p_thetaS, "p(thetaS)");
  for (const auto& row : p_D_given_thetaS) require_dist(row, "p(D|thetaS)");
  for (const auto& row : p_thetat_given_D) require_dist(row, "p(thetat|D)");
  if (p_D_given_thetaS.size() != p_thetaS.size())
    throw std::runtime_error("dimension mismatch: p(D|thetaS) rows");
  for (const auto& row : p_D_given_thetaS)
    if (row.size() != p_thetat_given_D.size())
      throw std::runtime_error("dimension mismatch: D cardinality");
}

double& DiscreteJoint3::at(std::size_t s, std::size_t d, std::size_t t) {
  return p[(s * nd + d) * nt + t];
}

double DiscreteJoint3::at(std::size_t s, std::size_t d, std::size_t t) const {
  return p[(s * nd + d) * nt + t];
}

void DiscreteJoint3::validate() const {
  if (p.size() != ns * nd * nt) throw std::runtime_error("dimension mismatch: joint table");
  require_dist(p, "joint");
}

DiscreteJoint3 to_joint3(const DiscreteCausalJoint& joint) {
  joint.validate();
  DiscreteJoint3 j;
  j.ns = joint.p_thetaS.size();
  j.nd = joint.p_thetat_given_D.size();
  j.nt = joint.p_thetat_given_D.empty() ? 0 : joint.p_thetat_given_D[0].size();
  j.p.assign(j.ns * j.nd * j.nt, 0.0);
  for (std::size_t s = 0; s < j.ns; ++s)
    for (std::size_t d = 0; d < j.nd; ++d)
      for (std::size_t t = 0; t < j.nt; ++t)
        j.at(s, d, t) = joint.p_thetaS[s] * joint.p_D_given_thetaS[s][d] *
                        joint.p_thetat_given_D[d][t];
  return j;
}

double factorization_deviation(const DiscreteJoint3& joint) {
  joint.validate();
  double worst = 0.0;
  for (std::size_t d = 0; d < joint.nd; ++d) {
    double pd = 0.0;
    for (std::size_t s = 0; s < joint.ns; ++s)
      for (std::size_t t = 0; t < joint.nt; ++t) pd += joint.at(s, d, t);
    if (pd == 0.0) continue;  // conditioning on zero-probability D is undefined
    for (std::size_t s = 0; s < joint.ns; ++s) {
      double ps = 0.0;
      for (std::size_t t = 0; t < joint.nt; ++t) ps += joint.at(s, d, t);
      ps /= pd;
      for (std::size_t t = 0; t < joint.nt; ++t) {
        double pt = 0.0;
        for (std::size_t s2 = 0; s2 < joint.ns; ++s2) pt += joint.at(s2, d, t);
        pt /= pd;
        const double cell = joint.at(s, d, t) / pd;
        worst = std::max(worst, std::abs(cell - ps * pt));
      }
    }
  }
  return worst;
}

double proposition1_check(const DiscreteCausalJoint& joint) {
  return factorization_deviation(to_joint3(joint));
}

}  // namespace bgr
