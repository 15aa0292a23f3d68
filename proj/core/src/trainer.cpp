#include "bgr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace bgr {

Method method_from_string(const std::string& name) {
  if (name == "sgd") return Method::sgd;
  if (name == "all_data") return Method::all_data;
  if (name == "ewc") return Method::ewc;
  if (name == "vcl") return Method::vcl;
  if (name == "gen") return Method::gen;
  if (name == "gen_l2") return Method::gen_l2;
  if (name == "bgr") return Method::bgr;
  throw std::runtime_error("unknown method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::sgd: return "sgd";
    case Method::all_data: return "all_data";
    case Method::ewc: return "ewc";
    case Method::vcl: return "vcl";
    case Method::gen: return "gen";
    case Method::gen_l2: return "gen_l2";
    case Method::bgr: return "bgr";
  }
  throw std::runtime_error("unknown method");
}

bool is_bayesian(Method m) { return m == Method::vcl || m == Method::bgr; }

bool is_generative(Method m) {
  return m == Method::bgr || m == Method::gen || m == Method::gen_l2;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::runtime_error("lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0) throw std::runtime_error("beta1 must lie in [0,1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw std::runtime_error("beta2 must lie in [0,1)");
  if (epochs < 1) throw std::runtime_error("epochs must be >= 1");
  if (batch_size < 1) throw std::runtime_error("batch_size must be >= 1");
  if (posterior_samples < 1)
    throw std::runtime_error("posterior_samples must be >= 1");
  if (!std::isfinite(gamma) || gamma < 0.0)
    throw std::runtime_error("gamma must be finite and >= 0");
  if (!(prior_std > 0.0)) throw std::runtime_error("prior_std must be positive");
  if (ewc_lambda < 0.0) throw std::runtime_error("ewc_lambda must be >= 0");
  if (l2_lambda < 0.0) throw std::runtime_error("l2_lambda must be >= 0");
  sgld.validate();
  if (is_generative(method) && buffer_capacity < 1)
    throw std::runtime_error("buffer_capacity must be >= 1");
}

bool TrainerState::head_trained(int head) const {
  for (int t : trained_tasks)
    if (task_head.at(t) == head) return true;
  return false;
}

const ParamVector& TrainerState::eval_params() const {
  return bayesian ? posterior.mu : point;
}

TrainerState init_state(const MlpArchitecture& arch,
                        const std::map<int, int>& task_head,
                        const TrainConfig& config) {
  arch.validate();
  config.validate();
  for (const auto& [task, head] : task_head) arch.head_classes(head);

  TrainerState st;
  st.arch = arch;
  st.task_head = task_head;
  st.bayesian = is_bayesian(config.method);

  Rng init_rng(config.seed);
  GaussianPosterior q = init_training_posterior(arch, init_rng);
  if (st.bayesian) {
    st.posterior = q;
    st.previous_posterior = q;  // untrained segments stay identical in both
  } else {
    st.point = q.mu;
    st.previous_point = q.mu;
  }

  if (is_generative(config.method)) {
    std::size_t y_max = 0;
    for (const auto& [head, classes] : arch.heads) y_max = std::max(y_max, classes);
    st.buffer = ReplayBuffer(config.buffer_capacity, arch.input_dim, y_max);
  }
  return st;
}

namespace {

SegmentMask trainable_segments(const ParamLayout& layout, int head) {
  SegmentMask m(layout.segments.size(), false);
  for (std::size_t i = 0; i < layout.segments.size(); ++i) {
    const auto& seg = layout.segments[i];
    m[i] = seg.head_task < 0 || seg.head_task == head;
  }
  return m;
}

// segments with a trained history: these carry the KL anchor
SegmentMask anchored_segments(const ParamLayout& layout, const TrainerState& st) {
  SegmentMask m(layout.segments.size(), false);
  const bool trunk_trained = !st.trained_tasks.empty();
  for (std::size_t i = 0; i < layout.segments.size(); ++i) {
    const auto& seg = layout.segments[i];
    m[i] = seg.head_task < 0 ? trunk_trained : st.head_trained(seg.head_task);
  }
  return m;
}

bool all_finite(const ParamVector& v) {
  for (double x : v.values)
    if (!std::isfinite(x)) return false;
  return true;
}

LabeledBatch take_batch(const TaskDataset& ds, const std::vector<std::size_t>& idx,
                        std::size_t lo, std::size_t hi) {
  const std::size_t d = ds.x.cols(), c = ds.y.cols(), n = hi - lo;
  LabeledBatch b{Tensor::zeros({n, d}), Tensor::zeros({n, c})};
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = idx[lo + r];
    std::copy_n(ds.x.data.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                b.x.data.begin() + static_cast<std::ptrdiff_t>(r * d));
    std::copy_n(ds.y.data.begin() + static_cast<std::ptrdiff_t>(i * c), c,
                b.y.data.begin() + static_cast<std::ptrdiff_t>(r * c));
  }
  return b;
}

double batch_nll(const ParamVector& params, const MlpArchitecture& arch, int head,
                 const LabeledBatch& b) {
  Tensor probs = conditional_probs(forward(params, arch, b.x, head));
  double nll = 0.0;
  for (std::size_t r = 0; r < b.y.rows(); ++r)
    for (std::size_t c = 0; c < b.y.cols(); ++c)
      if (b.y.at(r, c) == 1.0) nll -= std::log(std::max(probs.at(r, c), 1e-300));
  return nll / static_cast<double>(b.y.rows());
}

struct PointPenalties {
  const TrainConfig* config;
  const TrainerState* state;

  void apply(ParamVector& g, const ParamVector& point) const {
    if (config->method == Method::gen_l2) {
      for (std::size_t i = 0; i < g.values.size(); ++i)
        g.values[i] += config->l2_lambda *
                       (point.values[i] - state->previous_point.values[i]);
    }
    if (config->method == Method::ewc) {
      for (const auto& [fisher, anchor] : state->ewc_anchors)
        for (std::size_t i = 0; i < g.values.size(); ++i)
          g.values[i] += config->ewc_lambda * fisher.values.values[i] *
                         (point.values[i] - anchor.values[i]);
    }
  }
};

}  // namespace

void train_task(TrainerState& state, const TaskDataset& dataset,
                const TrainConfig& config, const StepHook& on_step) {
  config.validate();
  dataset.validate();
  const auto head_it = state.task_head.find(dataset.task_id);
  if (head_it == state.task_head.end()) throw std::runtime_error("unknown task");
  const int head = head_it->second;
  if (state.arch.head_classes(head) != dataset.classes())
    throw std::runtime_error("dimension mismatch: head classes");

  Rng task_rng(mix_seed(config.seed) +
               static_cast<std::uint64_t>(dataset.task_id));
  Rng shuffle_rng = task_rng.fork(1);
  Rng draw_rng = task_rng.fork(2);
  Rng sgld_rng = task_rng.fork(3);

  if (config.reset_buffer_per_task && state.buffer.capacity() > 0)
    state.buffer.clear();

  const auto layout =
      state.bayesian ? state.posterior.mu.layout : state.point.layout;
  const SegmentMask update_mask = trainable_segments(*layout, head);
  const SegmentMask history = anchored_segments(*layout, state);
  const bool generative = is_generative(config.method);

  // KL anchor per Eq. 1 unrolled from q_0 = p_0: segments with a trained
  // history anchor to q_{t-1}, everything the task trains for the first time
  // anchors to the prior. (The logged KL metric keeps using q_{t-1}, which
  // matches the current posterior bitwise on fresh segments at step 0.)
  GaussianPosterior anchor;
  if (state.bayesian) {
    anchor = state.previous_posterior;
    const GaussianPosterior prior =
        init_prior(state.arch, PriorSpec{0.0, config.prior_std});
    for (std::size_t i = 0; i < layout->segments.size(); ++i) {
      if (history[i] || !update_mask[i]) continue;
      const auto& seg = layout->segments[i];
      std::copy_n(prior.mu.values.begin() + static_cast<std::ptrdiff_t>(seg.offset),
                  seg.length,
                  anchor.mu.values.begin() + static_cast<std::ptrdiff_t>(seg.offset));
      std::copy_n(prior.rho.values.begin() + static_cast<std::ptrdiff_t>(seg.offset),
                  seg.length,
                  anchor.rho.values.begin() + static_cast<std::ptrdiff_t>(seg.offset));
    }
  }
  const double gamma = config.method == Method::bgr || !state.bayesian
                           ? config.gamma
                           : 0.0;

  MlpEnergy fn(state.arch, head, config.precision);
  const std::size_t n = dataset.size();
  const std::size_t k_draws = state.bayesian ? config.posterior_samples : 1;

  Adam opt_a({config.lr, config.beta1, config.beta2, 1e-8}, layout->total_size);
  Adam opt_b({config.lr, config.beta1, config.beta2, 1e-8}, layout->total_size);

  std::size_t step = 0;
  auto emit = [&](std::size_t epoch, const LabeledBatch* b) {
    if (!on_step) return;
    StepMetrics m;
    m.task = dataset.task_id;
    m.epoch = epoch;
    m.step = step;
    if (b) m.nll = batch_nll(state.eval_params(), state.arch, head, *b);
    if (state.bayesian)
      m.kl = kl_divergence(state.posterior, state.previous_posterior);
    on_step(m);
  };
  emit(0, nullptr);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), shuffle_rng.engine());
    for (std::size_t lo = 0; lo < n; lo += config.batch_size) {
      const std::size_t hi = std::min(n, lo + config.batch_size);
      LabeledBatch db = take_batch(dataset, idx, lo, hi);

      std::vector<ParamSample> samples;
      if (state.bayesian) {
        samples.reserve(k_draws);
        for (std::size_t k = 0; k < k_draws; ++k)
          samples.push_back(sample_params(state.posterior, draw_rng));
      }

      // Algorithm 1 batch, generated once per minibatch with the first draw
      LabeledBatch sgld_batch;
      if (generative && gamma != 0.0) {
        const ParamVector& gen_theta =
            state.bayesian ? samples[0].theta : state.point;
        SampleResult s = sample(gen_theta, state.arch, head, state.buffer,
                                config.sgld, sgld_rng, config.precision);
        sgld_batch = LabeledBatch{std::move(s.x), std::move(s.y)};
      }
      const LabeledBatch& model_batch = sgld_batch.x.size() ? sgld_batch : db;

      if (state.bayesian) {
        // Eq. 1 is sum-NLL over the task plus one KL; against the per-example
        // mean NLL used here that is a 1/|D_t| KL weight per minibatch.
        const double kl_scale = 1.0 / static_cast<double>(n);
        VariationalGrad acc{ParamVector::zeros(layout), ParamVector::zeros(layout)};
        for (std::size_t k = 0; k < k_draws; ++k) {
          VariationalGrad g =
              bgr_total_grad(fn, state.posterior, state.previous_posterior,
                             samples[k], db, model_batch, gamma, 0.0);
          add_scaled(acc.mu, g.mu, 1.0 / static_cast<double>(k_draws));
          add_scaled(acc.rho, g.rho, 1.0 / static_cast<double>(k_draws));
        }
        // KL term once per minibatch; it does not depend on the draws.
        // Frozen segments' components die in the update-mask pass below.
        VariationalGrad kg = kl_gradients(state.posterior, anchor);
        add_scaled(acc.mu, kg.mu, kl_scale);
        add_scaled(acc.rho, kg.rho, kl_scale);
        zero_unmasked(acc.mu, update_mask);
        zero_unmasked(acc.rho, update_mask);
        if (!all_finite(acc.mu) || !all_finite(acc.rho))
          throw std::runtime_error("training diverged: non-finite gradient at task " +
                                   std::to_string(dataset.task_id));
        opt_a.step(state.posterior.mu.values, acc.mu.values);
        opt_b.step(state.posterior.rho.values, acc.rho.values);
      } else {
        ParamVector g = nll_grad(fn, state.point, db.x, db.y);
        if (generative && gamma != 0.0)
          add_scaled(g, cd_joint_grad(fn, state.point, db, model_batch), -gamma);
        PointPenalties{&config, &state}.apply(g, state.point);
        zero_unmasked(g, update_mask);
        if (!all_finite(g))
          throw std::runtime_error("training diverged: non-finite gradient at task " +
                                   std::to_string(dataset.task_id));
        opt_a.step(state.point.values, g.values);
      }
      ++step;
      emit(epoch, &db);
    }
  }

  state.trained_tasks.push_back(dataset.task_id);
  if (state.bayesian)
    state.previous_posterior = state.posterior;
  else
    state.previous_point = state.point;
  if (config.method == Method::ewc)
    state.ewc_anchors.push_back(
        {ewc_fisher(state.point, state.arch, head, dataset, config.ewc_sample_cap),
         state.point});
}

FisherDiag ewc_fisher(const ParamVector& params, const MlpArchitecture& arch,
                      int head, const TaskDataset& dataset, std::size_t sample_cap) {
  dataset.validate();
  const std::size_t n =
      sample_cap == 0 ? dataset.size() : std::min(dataset.size(), sample_cap);
  if (n == 0) throw std::runtime_error("empty dataset");

  MlpEnergy fn(arch, head, Precision::f64);
  FisherDiag fisher{ParamVector::zeros(params.layout)};
  const std::size_t d = dataset.x.cols(), c = dataset.y.cols();
  for (std::size_t i = 0; i < n; ++i) {
    Tensor xi({1, d}, std::vector<double>(
                          dataset.x.data.begin() + static_cast<std::ptrdiff_t>(i * d),
                          dataset.x.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d)));
    Tensor yi({1, c}, std::vector<double>(
                          dataset.y.data.begin() + static_cast<std::ptrdiff_t>(i * c),
                          dataset.y.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * c)));
    ParamVector g = nll_grad(fn, params, xi, yi);
    for (std::size_t j = 0; j < g.values.size(); ++j)
      fisher.values.values[j] += g.values[j] * g.values[j];
  }
  for (double& v : fisher.values.values) v /= static_cast<double>(n);
  return fisher;
}

double evaluate(const TrainerState& state, const TaskDataset& dataset, int task) {
  const auto head_it = state.task_head.find(task);
  if (head_it == state.task_head.end()) throw std::runtime_error("unknown task");
  const int head = head_it->second;
  dataset.validate();
  if (state.arch.head_classes(head) != dataset.classes())
    throw std::runtime_error("dimension mismatch: head classes");

  const ParamVector& params = state.eval_params();
  const std::size_t n = dataset.size(), d = dataset.x.cols(), c = dataset.y.cols();
  const std::size_t chunk = 2048;
  std::size_t correct = 0;
  for (std::size_t lo = 0; lo < n; lo += chunk) {
    const std::size_t hi = std::min(n, lo + chunk);
    Tensor xb({hi - lo, d},
              std::vector<double>(
                  dataset.x.data.begin() + static_cast<std::ptrdiff_t>(lo * d),
                  dataset.x.data.begin() + static_cast<std::ptrdiff_t>(hi * d)));
    Tensor probs = conditional_probs(forward(params, state.arch, xb, head));
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (probs.at(r, j) > probs.at(r, best)) best = j;  // ties keep the lowest
      if (dataset.y.at(lo + r, best) == 1.0) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

void train_all_data(TrainerState& state,
                    const std::vector<const TaskDataset*>& datasets,
                    const TrainConfig& config, const StepHook& on_step) {
  const auto layout = state.point.layout;
  std::size_t total = 0;
  for (const auto* ds : datasets) total += ds->size();
  const std::size_t steps_per_epoch =
      (total + config.batch_size - 1) / config.batch_size;

  Rng rng(mix_seed(config.seed) ^ mix_seed(0xa11d + datasets.size()));
  Adam opt({config.lr, config.beta1, config.beta2, 1e-8}, layout->total_size);

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const auto* ds = datasets[rng.below(datasets.size())];
      const int head = state.task_head.at(ds->task_id);
      const std::size_t b = std::min<std::size_t>(config.batch_size, ds->size());
      std::vector<std::size_t> idx(b);
      for (auto& i : idx) i = rng.below(ds->size());
      LabeledBatch db = take_batch(*ds, idx, 0, b);

      MlpEnergy fn(state.arch, head, config.precision);
      ParamVector g = nll_grad(fn, state.point, db.x, db.y);
      zero_unmasked(g, trainable_segments(*layout, head));
      if (!all_finite(g))
        throw std::runtime_error("training diverged: non-finite gradient");
      opt.step(state.point.values, g.values);
      ++step;
      if (on_step) {
        StepMetrics m;
        m.task = ds->task_id;
        m.epoch = epoch;
        m.step = step;
        m.nll = batch_nll(state.point, state.arch, head, db);
        on_step(m);
      }
    }
  }
  state.trained_tasks.push_back(datasets.back()->task_id);
  state.previous_point = state.point;
}

}  // namespace

RunResult run_sequence(TaskStream stream, const MlpArchitecture& arch,
                       const TrainConfig& config, const RunHooks& hooks) {
  stream.validate();
  config.validate();

  std::map<int, int> task_head;
  for (const auto& t : stream.tasks)
    task_head[t.train.task_id] = stream.head_for_task(t.train.task_id);

  TrainerState state = init_state(arch, task_head, config);
  const std::size_t T = stream.tasks.size();

  // train splits move into this pool; memoryless methods surrender each one
  // as soon as its task finishes
  std::vector<std::optional<TaskDataset>> pool(T + 1);
  for (std::size_t t = 1; t <= T; ++t) pool[t] = std::move(stream.tasks[t - 1].train);

  RunResult result;
  for (std::size_t t = 1; t <= T; ++t) {
    if (hooks.on_task_start) {
      std::vector<int> reachable;
      for (std::size_t j = 1; j <= t; ++j)
        if (pool[j].has_value()) reachable.push_back(static_cast<int>(j));
      hooks.on_task_start(static_cast<int>(t), reachable);
    }

    const auto t0 = std::chrono::steady_clock::now();
    if (config.method == Method::all_data) {
      std::vector<const TaskDataset*> seen;
      for (std::size_t j = 1; j <= t; ++j) seen.push_back(&*pool[j]);
      train_all_data(state, seen, config, hooks.on_step);
    } else {
      train_task(state, *pool[t], config, hooks.on_step);
      pool[t].reset();
    }
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    result.task_seconds.push_back(dt.count());

    std::vector<double> row;
    for (std::size_t j = 1; j <= t; ++j)
      row.push_back(evaluate(state, stream.tasks[j - 1].test, static_cast<int>(j)));
    result.matrix.append_row(std::move(row));
    if (hooks.on_task_end) hooks.on_task_end(static_cast<int>(t), state);
  }
  result.state = std::move(state);
  return result;
}

}  // namespace bgr
