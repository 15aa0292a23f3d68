#pragma once

#include "bgr/ebm.hpp"

namespace bgr {

// Exactly enumerable stand-in for p(x,y) = exp(y^T f(x))/Z: the input domain
// collapses to a finite grid, so Z is a finite double sum. Test oracle only.
struct GridEbmSpec {
  Tensor x_grid;  // [G x d]
  std::size_t classes = 2;

  void validate() const;
  Tensor row(std::size_t i) const;  // [1 x d]
};

// log Z = log sum_{x in grid} sum_y exp(y^T f(x))
double exact_log_partition(const ParamEnergy& fn, const ParamVector& theta,
                           const GridEbmSpec& grid);

// log p(x) = log sum_y exp(y^T f(x)) - log Z; x must be a grid row (exact match)
double exact_grid_logp(const ParamEnergy& fn, const ParamVector& theta,
                       const GridEbmSpec& grid, const Tensor& x);

// log p(x, y=c) for grid row index i
double exact_joint_logp(const ParamEnergy& fn, const ParamVector& theta,
                        const GridEbmSpec& grid, std::size_t i, std::size_t c);

// E_{p(x,y)}[y^T df/dtheta], every expectation enumerated
ParamVector exact_model_expectation(const ParamEnergy& fn, const ParamVector& theta,
                                    const GridEbmSpec& grid);

// Exact-expectation counterparts of the sampled estimators: the model batch
// is replaced by the enumerated expectation above.
ParamVector exact_cd_joint_grad(const ParamEnergy& fn, const ParamVector& theta,
                                const GridEbmSpec& grid, const LabeledBatch& data);
ParamVector exact_logpx_grad(const ParamEnergy& fn, const ParamVector& theta,
                             const GridEbmSpec& grid, const Tensor& x_batch);
VariationalGrad exact_bgr_total_grad(const ParamEnergy& fn, const GaussianPosterior& q_t,
                                     const GaussianPosterior& q_prev,
                                     const ParamSample& model_sample,
                                     const LabeledBatch& data_batch,
                                     const GridEbmSpec& grid, double gamma,
                                     double kl_scale,
                                     const SegmentMask* kl_mask = nullptr);

// Causally factorized p(theta_S, D, theta_t) = p(theta_S) p(D|theta_S) p(theta_t|D).
struct DiscreteCausalJoint {
  std::vector<double> p_thetaS;
  std::vector<std::vector<double>> p_D_given_thetaS;   // [|S|][|D|]
  std::vector<std::vector<double>> p_thetat_given_D;   // [|D|][|T|]

  void validate() const;
};

// Arbitrary three-way joint table, for counterexamples that break the
// factorization.
struct DiscreteJoint3 {
  std::size_t ns = 0, nd = 0, nt = 0;
  std::vector<double> p;  // [ns][nd][nt] row-major

  double& at(std::size_t s, std::size_t d, std::size_t t);
  double at(std::size_t s, std::size_t d, std::size_t t) const;
  void validate() const;
};

DiscreteJoint3 to_joint3(const DiscreteCausalJoint& joint);

// max over D (with p(D) > 0) and cells of |p(s,t|D) - p(s|D) p(t|D)|
double factorization_deviation(const DiscreteJoint3& joint);
double proposition1_check(const DiscreteCausalJoint& joint);

}  // namespace bgr
