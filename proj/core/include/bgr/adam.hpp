#pragma once

#include <cstddef>
#include <vector>

namespace bgr {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over a flat parameter vector.
class Adam {
 public:
  Adam(AdamConfig config, std::size_t n);

  void step(std::vector<double>& params, const std::vector<double>& grad);
  std::size_t steps_taken() const { return t_; }

  // checkpoint plumbing
  const std::vector<double>& m() const { return m_; }
  const std::vector<double>& v() const { return v_; }
  void restore(std::size_t t, std::vector<double> m, std::vector<double> v);

 private:
  AdamConfig config_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace bgr
