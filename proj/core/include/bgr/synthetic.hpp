#pragma once

#include "bgr/data.hpp"

namespace bgr {

// One labelled 2-D Gaussian blob of a mixture task.
struct GaussianComponent {
  double mean_x = 0.0, mean_y = 0.0;
  double var_x = 1.0, var_y = 1.0, cov = 0.0;
  int label = 0;
  double weight = 1.0;
};

struct SyntheticTaskSpec {
  std::vector<GaussianComponent> components;
  std::size_t classes = 2;
  std::size_t n_train = 400, n_val = 60, n_test = 400;
};

struct SyntheticStreamSpec {
  std::vector<SyntheticTaskSpec> tasks;
  std::uint64_t seed = 0;
  bool shared_head = false;
};

struct SyntheticBuildResult {
  TaskStream stream;
  // accuracy of the exact Bayes classifier of each task's mixture on that
  // task's sampled test labels
  std::vector<double> bayes_accuracy;
};

SyntheticBuildResult build_synthetic_stream_full(const SyntheticStreamSpec& spec);
TaskStream build_synthetic_stream(const SyntheticStreamSpec& spec);

// Two single-head tasks over orthogonal cluster axes; task 2 training erases
// task 1's rule for plain SGD. The forgetting-ordering property tests run on
// this stream.
SyntheticStreamSpec conflicting_two_task_spec(std::uint64_t seed = 17);

}  // namespace bgr
