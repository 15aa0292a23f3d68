#pragma once

#include <functional>
#include <memory>

#include "bgr/mlp.hpp"
#include "bgr/rng.hpp"

namespace bgr {

// Ring of previously generated (x, y) pairs; chains restart from here unless
// the reinitialization coin flips.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(std::size_t capacity, std::size_t x_dim, std::size_t y_dim);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return count_; }
  std::size_t x_dim() const { return x_dim_; }
  std::size_t y_dim() const { return y_dim_; }
  std::size_t cursor() const { return cursor_; }

  const double* x_at(std::size_t i) const { return xs_.data() + i * x_dim_; }
  const double* y_at(std::size_t i) const { return ys_.data() + i * y_dim_; }

  void push_row(const double* x, const double* y);
  void clear();

  // checkpoint plumbing: raw ring contents in storage order
  const std::vector<double>& raw_x() const { return xs_; }
  const std::vector<double>& raw_y() const { return ys_; }
  void restore(std::size_t count, std::size_t cursor, std::vector<double> xs,
               std::vector<double> ys);

 private:
  std::size_t capacity_ = 0, x_dim_ = 0, y_dim_ = 0;
  std::size_t count_ = 0, cursor_ = 0;
  std::vector<double> xs_, ys_;
};

// Checked single-entry push: x and y are [1 x d] / [1 x C] rows, x within
// the given clamp bounds.
void buffer_push(ReplayBuffer& buffer, const Tensor& x, const Tensor& y,
                 double clamp_lo = 0.0, double clamp_hi = 1.0);

enum class SgldNoise { fixed, eta_scaled };       // eta_scaled: eps ~ N(0, eta_s)
enum class SgldSchedule { harmonic, constant };   // harmonic: eta_s = eta0 / s

struct SgldConfig {
  std::size_t steps = 60;
  double base_step = 10.0;    // eta0
  double noise_std = 5e-3;
  double reinit_rate = 0.05;  // r
  double clamp_lo = 0.0;
  double clamp_hi = 1.0;
  std::size_t chain_batch = 64;
  SgldNoise noise = SgldNoise::fixed;
  SgldSchedule schedule = SgldSchedule::harmonic;

  void validate() const;
};

// What a chain needs from the model at one point: logits for the Gibbs label
// draw and the input gradient of y^T f for the Langevin move.
class ChainEval {
 public:
  virtual ~ChainEval() = default;
  virtual const Tensor& logits() const = 0;
  virtual Tensor grad_x(const Tensor& y) const = 0;
};

class ChainTarget {
 public:
  virtual ~ChainTarget() = default;
  virtual std::size_t classes() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::unique_ptr<ChainEval> at(const Tensor& x) const = 0;
};

// Production target: the MLP head for `task` at fixed parameters.
class MlpChainTarget : public ChainTarget {
 public:
  MlpChainTarget(const ParamVector& theta, const MlpArchitecture& arch, int task,
                 Precision prec = Precision::f64);
  std::size_t classes() const override;
  std::size_t input_dim() const override { return arch_.input_dim; }
  std::unique_ptr<ChainEval> at(const Tensor& x) const override;

 private:
  const ParamVector& theta_;
  MlpArchitecture arch_;
  int task_;
  Precision prec_;
};

Tensor init_chain(const ReplayBuffer& buffer, const SgldConfig& config, Rng& rng,
                  std::size_t input_dim);

struct SampleResult {
  Tensor x;
  Tensor y;
};

// Called after every chain step with (1-based step, eta_s, current state).
using StepObserver = std::function<void(std::size_t, double, const Tensor&)>;

// Gibbs-Langevin chain: per step draw y ~ p(y|x) (or the fixed class when
// fixed_class >= 0), ascend x by eta_s/2 * d(y^T f)/dx, add noise, clamp.
// The final pair is pushed into the buffer and returned.
SampleResult sample_chain(const ChainTarget& target, ReplayBuffer& buffer,
                          const SgldConfig& config, Rng& rng, int fixed_class = -1,
                          const StepObserver& observer = {});

SampleResult sample(const ParamVector& theta, const MlpArchitecture& arch, int task,
                    ReplayBuffer& buffer, const SgldConfig& config, Rng& rng,
                    Precision prec = Precision::f64, int fixed_class = -1);

}  // namespace bgr
