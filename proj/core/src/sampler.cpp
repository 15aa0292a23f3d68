#include "bgr/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "bgr/ebm.hpp"

namespace bgr {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t x_dim, std::size_t y_dim)
    : capacity_(capacity), x_dim_(x_dim), y_dim_(y_dim) {
  if (capacity == 0) throw std::runtime_error("buffer capacity must be positive");
  xs_.assign(capacity * x_dim, 0.0);
  ys_.assign(capacity * y_dim, 0.0);
}

void ReplayBuffer::push_row(const double* x, const double* y) {
  if (capacity_ == 0) throw std::runtime_error("buffer not initialized");
  std::copy(x, x + x_dim_, xs_.begin() + static_cast<std::ptrdiff_t>(cursor_ * x_dim_));
  std::copy(y, y + y_dim_, ys_.begin() + static_cast<std::ptrdiff_t>(cursor_ * y_dim_));
  cursor_ = (cursor_ + 1) % capacity_;
  if (count_ < capacity_) ++count_;
}

void ReplayBuffer::clear() {
  count_ = 0;
  cursor_ = 0;
}

void ReplayBuffer::restore(std::size_t count, std::size_t cursor,
                           std::vector<double> xs, std::vector<double> ys) {
  if (count > capacity_ || cursor >= std::max<std::size_t>(capacity_, 1) ||
      xs.size() != capacity_ * x_dim_ || ys.size() != capacity_ * y_dim_)
    throw std::runtime_error("dimension mismatch: buffer restore");
  count_ = count;
  cursor_ = cursor;
  xs_ = std::move(xs);
  ys_ = std::move(ys);
}

void buffer_push(ReplayBuffer& buffer, const Tensor& x, const Tensor& y,
                 double clamp_lo, double clamp_hi) {
  if (x.rank() != 2 || x.rows() != 1 || x.cols() != buffer.x_dim() ||
      y.rank() != 2 || y.rows() != 1 || y.cols() != buffer.y_dim())
    throw std::runtime_error("dimension mismatch: buffer entry");
  for (double v : x.data)
    if (v < clamp_lo || v > clamp_hi)
      throw std::runtime_error("buffer entry outside clamp bounds");
  buffer.push_row(x.data.data(), y.data.data());
}

void SgldConfig::validate() const {
  if (steps < 1) throw std::runtime_error("sgld steps must be >= 1");
  if (!(base_step > 0.0)) throw std::runtime_error("sgld base_step must be positive");
  if (noise_std < 0.0) throw std::runtime_error("sgld noise_std must be >= 0");
  if (reinit_rate < 0.0 || reinit_rate > 1.0)
    throw std::runtime_error("sgld reinit_rate must lie in [0,1]");
  if (!(clamp_lo < clamp_hi)) throw std::runtime_error("sgld clamp range empty");
  if (chain_batch < 1) throw std::runtime_error("sgld chain_batch must be >= 1");
}

namespace {

struct MlpChainEval : ChainEval {
  MlpBatch batch;
  explicit MlpChainEval(MlpBatch b) : batch(std::move(b)) {}
  const Tensor& logits() const override { return batch.logits(); }
  Tensor grad_x(const Tensor& y) const override { return batch.input_grad(y); }
};

}  // namespace

MlpChainTarget::MlpChainTarget(const ParamVector& theta, const MlpArchitecture& arch,
                               int task, Precision prec)
    : theta_(theta), arch_(arch), task_(task), prec_(prec) {
  arch_.head_classes(task_);
}

std::size_t MlpChainTarget::classes() const { return arch_.head_classes(task_); }

std::unique_ptr<ChainEval> MlpChainTarget::at(const Tensor& x) const {
  return std::make_unique<MlpChainEval>(MlpBatch(theta_, arch_, x, task_, prec_));
}

Tensor init_chain(const ReplayBuffer& buffer, const SgldConfig& config, Rng& rng,
                  std::size_t input_dim) {
  config.validate();
  Tensor x = Tensor::zeros({config.chain_batch, input_dim});
  for (std::size_t r = 0; r < config.chain_batch; ++r) {
    const bool from_noise =
        buffer.size() == 0 || rng.uniform() < config.reinit_rate;
    if (from_noise) {
      for (std::size_t c = 0; c < input_dim; ++c)
        x.at(r, c) = config.clamp_lo + (config.clamp_hi - config.clamp_lo) * rng.uniform();
    } else {
      const double* src = buffer.x_at(rng.below(buffer.size()));
      for (std::size_t c = 0; c < input_dim; ++c) x.at(r, c) = src[c];
    }
  }
  return x;
}

SampleResult sample_chain(const ChainTarget& target, ReplayBuffer& buffer,
                          const SgldConfig& config, Rng& rng, int fixed_class,
                          const StepObserver& observer) {
  config.validate();
  const std::size_t classes = target.classes();
  if (fixed_class >= 0 && static_cast<std::size_t>(fixed_class) >= classes)
    throw std::runtime_error("unknown head: fixed class out of range");

  Tensor x = init_chain(buffer, config, rng, target.input_dim());
  Tensor y = Tensor::zeros({config.chain_batch, classes});

  for (std::size_t s = 1; s <= config.steps; ++s) {
    const double eta = config.schedule == SgldSchedule::harmonic
                           ? config.base_step / static_cast<double>(s)
                           : config.base_step;
    auto eval = target.at(x);

    // Gibbs step: y_s ~ p(y | x_{s-1})
    std::fill(y.data.begin(), y.data.end(), 0.0);
    if (fixed_class >= 0) {
      for (std::size_t r = 0; r < y.rows(); ++r)
        y.at(r, static_cast<std::size_t>(fixed_class)) = 1.0;
    } else {
      Tensor probs = conditional_probs(eval->logits());
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const double u = rng.uniform();
        double acc = 0.0;
        std::size_t pick = classes - 1;
        for (std::size_t c = 0; c < classes; ++c) {
          acc += probs.at(r, c);
          if (u < acc) { pick = c; break; }
        }
        y.at(r, pick) = 1.0;
      }
    }

    // Langevin half-step on y^T f, then noise, then clamp
    Tensor g = eval->grad_x(y);
    const double sigma =
        config.noise == SgldNoise::fixed ? config.noise_std : std::sqrt(eta);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      double v = x.data[i] + 0.5 * eta * g.data[i];
      if (sigma > 0.0) v += sigma * rng.normal();
      x.data[i] = std::clamp(v, config.clamp_lo, config.clamp_hi);
    }
    if (!x.all_finite()) throw std::runtime_error("diverged chain");
    if (observer) observer(s, eta, x);
  }

  if (buffer.x_dim() != x.cols() || buffer.y_dim() != y.cols())
    throw std::runtime_error("dimension mismatch: buffer entry");
  for (std::size_t r = 0; r < x.rows(); ++r)
    buffer.push_row(x.data.data() + r * x.cols(), y.data.data() + r * y.cols());
  return {std::move(x), std::move(y)};
}

SampleResult sample(const ParamVector& theta, const MlpArchitecture& arch, int task,
                    ReplayBuffer& buffer, const SgldConfig& config, Rng& rng,
                    Precision prec, int fixed_class) {
  MlpChainTarget target(theta, arch, task, prec);
  return sample_chain(target, buffer, config, rng, fixed_class);
}

}  // namespace bgr
