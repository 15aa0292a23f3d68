#include "bgr/ebm.hpp"

#include <cmath>

namespace bgr {
namespace {

void require_labeled(const LabeledBatch& b, const char* what) {
  if (b.x.rank() != 2 || b.y.rank() != 2 || b.x.rows() != b.y.rows())
    throw std::runtime_error(std::string("dimension mismatch: ") + what);
  if (!is_one_hot(b.y)) throw std::runtime_error("labels must be one-hot");
}

// upstream for the mean cross-entropy: (softmax - y) / N
Tensor nll_upstream(const Tensor& probs, const Tensor& y) {
  const double n = static_cast<double>(probs.rows());
  Tensor u = Tensor::zeros(probs.shape);
  for (std::size_t i = 0; i < u.data.size(); ++i)
    u.data[i] = (probs.data[i] - y.data[i]) / n;
  return u;
}

// upstream realizing the batch mean of y^T grad f: y / N
Tensor mean_labels(const Tensor& y) {
  const double n = static_cast<double>(y.rows());
  Tensor u = y;
  for (double& v : u.data) v /= n;
  return u;
}

ParamVector nll_grad_cached(const ParamEnergyBatch& b, const Tensor& y) {
  Tensor probs = conditional_probs(b.logits());
  if (probs.rows() != y.rows() || probs.cols() != y.cols())
    throw std::runtime_error("dimension mismatch: labels vs logits");
  return b.backward(nll_upstream(probs, y));
}

void apply_segment_mask(VariationalGrad& g, const SegmentMask& mask) {
  zero_unmasked(g.mu, mask);
  zero_unmasked(g.rho, mask);
}

}  // namespace

// ---- MlpEnergy ----

namespace {

struct MlpEnergyBatch : ParamEnergyBatch {
  MlpBatch batch;
  explicit MlpEnergyBatch(MlpBatch b) : batch(std::move(b)) {}
  const Tensor& logits() const override { return batch.logits(); }
  ParamVector backward(const Tensor& upstream) const override {
    return batch.backward(upstream);
  }
};

}  // namespace

MlpEnergy::MlpEnergy(MlpArchitecture arch, int task, Precision prec)
    : arch_(std::move(arch)), task_(task), prec_(prec), layout_(make_layout(arch_)) {
  arch_.head_classes(task_);
}

std::size_t MlpEnergy::classes() const { return arch_.head_classes(task_); }

std::shared_ptr<const ParamLayout> MlpEnergy::layout() const { return layout_; }

std::unique_ptr<ParamEnergyBatch> MlpEnergy::batch(const ParamVector& theta,
                                                   const Tensor& x) const {
  return std::make_unique<MlpEnergyBatch>(MlpBatch(theta, arch_, x, task_, prec_));
}

// ---- softmax and gradient estimators ----

Tensor conditional_probs(const Tensor& logits) {
  if (logits.rank() != 2) throw std::runtime_error("dimension mismatch: logits rank");
  logits.require_finite("conditional_probs logits");
  Tensor p = Tensor::zeros(logits.shape);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double mx = logits.at(r, 0);
    for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      const double e = std::exp(logits.at(r, c) - mx);
      p.at(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < logits.cols(); ++c) p.at(r, c) /= z;
  }
  return p;
}

ParamVector nll_grad(const ParamEnergy& fn, const ParamVector& theta,
                     const Tensor& x, const Tensor& y) {
  if (!is_one_hot(y)) throw std::runtime_error("labels must be one-hot");
  auto b = fn.batch(theta, x);
  return nll_grad_cached(*b, y);
}

ParamVector cd_joint_grad(const ParamEnergy& fn, const ParamVector& theta,
                          const LabeledBatch& data, const LabeledBatch& model) {
  require_labeled(data, "data batch");
  require_labeled(model, "model batch");
  ParamVector g = fn.batch(theta, data.x)->backward(mean_labels(data.y));
  add_scaled(g, fn.batch(theta, model.x)->backward(mean_labels(model.y)), -1.0);
  return g;
}

ParamVector logpx_grad(const ParamEnergy& fn, const ParamVector& theta,
                       const Tensor& x, const LabeledBatch& model) {
  require_labeled(model, "model batch");
  auto b = fn.batch(theta, x);
  // E_{p(y|x)}[y^T grad f] is exact: weight the backward pass by the softmax
  ParamVector g = b->backward(mean_labels(conditional_probs(b->logits())));
  add_scaled(g, fn.batch(theta, model.x)->backward(mean_labels(model.y)), -1.0);
  return g;
}

VariationalGrad bgr_total_grad(const ParamEnergy& fn, const GaussianPosterior& q_t,
                               const GaussianPosterior& q_prev,
                               const ParamSample& model_sample,
                               const LabeledBatch& data_batch,
                               const LabeledBatch& sgld_batch, double gamma,
                               double kl_scale, const SegmentMask* kl_mask) {
  if (!std::isfinite(gamma) || gamma < 0.0)
    throw std::runtime_error("gamma must be finite and >= 0");
  if (!std::isfinite(kl_scale) || kl_scale < 0.0)
    throw std::runtime_error("kl_scale must be finite and >= 0");
  require_labeled(data_batch, "data batch");

  auto data_fwd = fn.batch(model_sample.theta, data_batch.x);
  ParamVector grad_theta = nll_grad_cached(*data_fwd, data_batch.y);

  // generative term, Eq. 6 descent direction: model-batch mean minus data mean.
  // Skipped outright at gamma = 0 so the reduction to VCL is bit-exact.
  if (gamma != 0.0) {
    require_labeled(sgld_batch, "sgld batch");
    add_scaled(grad_theta,
               fn.batch(model_sample.theta, sgld_batch.x)->backward(mean_labels(sgld_batch.y)),
               gamma);
    add_scaled(grad_theta, data_fwd->backward(mean_labels(data_batch.y)), -gamma);
  }

  VariationalGrad g = reparam_backward(grad_theta, model_sample.eps, q_t.rho);
  if (kl_scale != 0.0) {
    VariationalGrad kg = kl_gradients(q_t, q_prev);
    if (kl_mask) apply_segment_mask(kg, *kl_mask);
    add_scaled(g.mu, kg.mu, kl_scale);
    add_scaled(g.rho, kg.rho, kl_scale);
  }
  return g;
}

}  // namespace bgr
