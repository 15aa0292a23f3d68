#pragma once

#include <memory>

#include "bgr/mlp.hpp"
#include "bgr/posterior.hpp"

namespace bgr {

// One (theta, x) forward pass with enough state cached to run backward passes
// for several upstream signals.
class ParamEnergyBatch {
 public:
  virtual ~ParamEnergyBatch() = default;
  virtual const Tensor& logits() const = 0;
  // d/dtheta of sum_{i,c} upstream[i,c] * f_theta(x_i)[c]
  virtual ParamVector backward(const Tensor& upstream) const = 0;
};

// A differentiable logit function f_theta(x) with flat parameters. The
// production model is the multi-head MLP; tests plug in tiny closed-form
// models (linear, tabular) where the algebra can be done by hand.
class ParamEnergy {
 public:
  virtual ~ParamEnergy() = default;
  virtual std::size_t classes() const = 0;
  virtual std::shared_ptr<const ParamLayout> layout() const = 0;
  virtual std::unique_ptr<ParamEnergyBatch> batch(const ParamVector& theta,
                                                  const Tensor& x) const = 0;
};

// The MLP head selected by `task`, viewed as the energy f in
// p(x,y) = exp(y^T f(x)) / Z.
class MlpEnergy : public ParamEnergy {
 public:
  MlpEnergy(MlpArchitecture arch, int task, Precision prec = Precision::f64);
  std::size_t classes() const override;
  std::shared_ptr<const ParamLayout> layout() const override;
  std::unique_ptr<ParamEnergyBatch> batch(const ParamVector& theta,
                                          const Tensor& x) const override;

 private:
  MlpArchitecture arch_;
  int task_;
  Precision prec_;
  std::shared_ptr<const ParamLayout> layout_;
};

struct LabeledBatch {
  Tensor x;
  Tensor y;  // one-hot rows

  std::size_t size() const { return x.rows(); }
};

// Row-wise softmax with max-subtraction.
Tensor conditional_probs(const Tensor& logits);

// Gradient of the mean cross-entropy -1/N sum log p(y_i|x_i).
ParamVector nll_grad(const ParamEnergy& fn, const ParamVector& theta,
                     const Tensor& x, const Tensor& y);

// Contrastive-divergence estimate of d/dtheta log p(x,y) (ascent direction):
// data-batch mean of y^T df minus model-batch mean of y^T df.
ParamVector cd_joint_grad(const ParamEnergy& fn, const ParamVector& theta,
                          const LabeledBatch& data, const LabeledBatch& model);

// Estimate of d/dtheta log p(x): conditional term exact by class summation,
// joint term from the model batch.
ParamVector logpx_grad(const ParamEnergy& fn, const ParamVector& theta,
                       const Tensor& x, const LabeledBatch& model);

// Loss gradient for one posterior draw, in variational parameters:
//   kl_scale * d KL(q_t || q_prev)  +  d NLL  +  gamma * (model term - data term)
// with the theta-gradients routed through the reparametrized draw. A zero
// gamma or kl_scale skips its term entirely, so those reductions are
// bit-identical to the smaller methods. kl_mask, when given, keeps only the
// masked-true segments of the KL gradient (one flag per layout segment).
VariationalGrad bgr_total_grad(const ParamEnergy& fn, const GaussianPosterior& q_t,
                               const GaussianPosterior& q_prev,
                               const ParamSample& model_sample,
                               const LabeledBatch& data_batch,
                               const LabeledBatch& sgld_batch, double gamma,
                               double kl_scale,
                               const SegmentMask* kl_mask = nullptr);

}  // namespace bgr
