#pragma once

#include <functional>
#include <optional>

#include "bgr/adam.hpp"
#include "bgr/analysis.hpp"
#include "bgr/data.hpp"
#include "bgr/ebm.hpp"
#include "bgr/posterior.hpp"
#include "bgr/sampler.hpp"

namespace bgr {

enum class Method { sgd, all_data, ewc, vcl, gen, gen_l2, bgr };

Method method_from_string(const std::string& name);
std::string method_name(Method m);
// Bayesian methods carry a Gaussian posterior; the rest train point weights.
bool is_bayesian(Method m);
// Methods that run the Gibbs-Langevin sampler each minibatch.
bool is_generative(Method m);

struct TrainConfig {
  Method method = Method::bgr;
  double lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.999;
  std::size_t epochs = 5;
  std::size_t batch_size = 256;
  std::size_t posterior_samples = 10;  // K draws per minibatch
  double gamma = 1.0;
  double ewc_lambda = 100.0;
  double l2_lambda = 0.1;
  // Eq. 1 unrolls from q_0 = p_0 = N(0, prior_std^2): segments no task has
  // trained yet anchor their KL to this prior, which keeps sigma from
  // collapsing during the first task each segment sees.
  double prior_std = 1.0;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  SgldConfig sgld;
  std::size_t buffer_capacity = 10000;
  bool reset_buffer_per_task = false;
  std::size_t ewc_sample_cap = 600;

  void validate() const;
};

struct FisherDiag {
  ParamVector values;
};

struct StepMetrics {
  int task = 0;
  std::size_t epoch = 0;  // 0 marks the record taken before any update
  std::size_t step = 0;   // minibatch counter within the task
  double nll = 0.0;
  double kl = 0.0;  // full-layout KL(q_t || q_{t-1}); 0 for point methods
};

using StepHook = std::function<void(const StepMetrics&)>;

struct TrainerState {
  MlpArchitecture arch;
  std::map<int, int> task_head;  // task id -> head id
  bool bayesian = false;

  GaussianPosterior posterior;
  GaussianPosterior previous_posterior;
  ParamVector point;
  ParamVector previous_point;

  std::vector<std::pair<FisherDiag, ParamVector>> ewc_anchors;  // (F, theta*)
  ReplayBuffer buffer;
  std::vector<int> trained_tasks;

  bool head_trained(int head) const;
  // evaluation parameters: posterior mean or the point vector
  const ParamVector& eval_params() const;
};

TrainerState init_state(const MlpArchitecture& arch,
                        const std::map<int, int>& task_head,
                        const TrainConfig& config);

// One task of Algorithm 2 (or the matching baseline update rule). Mutates
// posterior/point, buffer, optimizer state; previous_* stay fixed until the
// task completes.
void train_task(TrainerState& state, const TaskDataset& dataset,
                const TrainConfig& config, const StepHook& on_step = {});

// Diagonal empirical Fisher at `params` over at most sample_cap examples.
FisherDiag ewc_fisher(const ParamVector& params, const MlpArchitecture& arch,
                      int head, const TaskDataset& dataset, std::size_t sample_cap);

// Deterministic accuracy at the evaluation parameters.
double evaluate(const TrainerState& state, const TaskDataset& dataset, int task);

struct RunHooks {
  // called before each task with the train-split task ids still reachable
  std::function<void(int, const std::vector<int>&)> on_task_start;
  std::function<void(int, const TrainerState&)> on_task_end;
  StepHook on_step;
};

struct RunResult {
  AccuracyMatrix matrix;
  std::vector<double> task_seconds;
  TrainerState state;
};

// Full sequence over the stream: train task t, evaluate tasks 1..t on their
// test splits. Memoryless methods surrender each train split right after its
// task; ALL_DATA keeps them and interleaves minibatches across tasks seen so
// far. The stream is consumed.
RunResult run_sequence(TaskStream stream, const MlpArchitecture& arch,
                       const TrainConfig& config, const RunHooks& hooks = {});

}  // namespace bgr
