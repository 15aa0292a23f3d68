#include "bgr/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace bgr {
namespace {

struct Chol2 {
  double l11, l21, l22;
};

Chol2 cholesky(const GaussianComponent& c) {
  if (!(c.var_x > 0.0) || !(c.var_y > 0.0))
    throw std::runtime_error("degenerate covariance");
  const double l11 = std::sqrt(c.var_x);
  const double l21 = c.cov / l11;
  const double rest = c.var_y - l21 * l21;
  if (!(rest > 0.0)) throw std::runtime_error("degenerate covariance");
  return {l11, l21, std::sqrt(rest)};
}

double log_pdf(const GaussianComponent& c, double x, double y) {
  const double det = c.var_x * c.var_y - c.cov * c.cov;
  const double dx = x - c.mean_x, dy = y - c.mean_y;
  const double quad = (c.var_y * dx * dx - 2.0 * c.cov * dx * dy + c.var_x * dy * dy) / det;
  return -0.5 * quad - 0.5 * std::log(det) - std::log(2.0 * 3.14159265358979323846);
}

struct Squash {
  double lo_x, hi_x, lo_y, hi_y;
  double x(double v) const { return std::clamp((v - lo_x) / (hi_x - lo_x), 0.0, 1.0); }
  double y(double v) const { return std::clamp((v - lo_y) / (hi_y - lo_y), 0.0, 1.0); }
};

// shared affine map: 4-sigma box around every component of every task
Squash make_squash(const SyntheticStreamSpec& spec) {
  Squash s{1e300, -1e300, 1e300, -1e300};
  for (const auto& task : spec.tasks) {
    for (const auto& c : task.components) {
      const double sx = 4.0 * std::sqrt(c.var_x), sy = 4.0 * std::sqrt(c.var_y);
      s.lo_x = std::min(s.lo_x, c.mean_x - sx);
      s.hi_x = std::max(s.hi_x, c.mean_x + sx);
      s.lo_y = std::min(s.lo_y, c.mean_y - sy);
      s.hi_y = std::max(s.hi_y, c.mean_y + sy);
    }
  }
  return s;
}

int bayes_label(const SyntheticTaskSpec& task, double x, double y) {
  // argmax over labels of the mixture density restricted to that label
  std::vector<double> score(task.classes, -1e300);
  for (const auto& c : task.components) {
    const double lp = std::log(c.weight) + log_pdf(c, x, y);
    auto& s = score[static_cast<std::size_t>(c.label)];
    s = std::max(s, lp) + std::log1p(std::exp(std::min(s, lp) - std::max(s, lp)));
  }
  return static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
}

TaskDataset draw(const SyntheticTaskSpec& task, const Squash& sq, std::size_t n,
                 int task_id, Split split, Rng& rng, double* bayes_hits) {
  double total_w = 0.0;
  for (const auto& c : task.components) {
    if (!(c.weight > 0.0)) throw std::runtime_error("component weight must be positive");
    total_w += c.weight;
  }
  TaskDataset ds;
  ds.task_id = task_id;
  ds.split = split;
  ds.x = Tensor::zeros({n, 2});
  ds.y = Tensor::zeros({n, task.classes});
  for (std::size_t c = 0; c < task.classes; ++c)
    ds.class_map[static_cast<int>(c)] = static_cast<int>(c);

  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.uniform() * total_w;
    const GaussianComponent* pick = &task.components.back();
    for (const auto& c : task.components) {
      if (u < c.weight) { pick = &c; break; }
      u -= c.weight;
    }
    const Chol2 l = cholesky(*pick);
    const double z1 = rng.normal(), z2 = rng.normal();
    const double vx = pick->mean_x + l.l11 * z1;
    const double vy = pick->mean_y + l.l21 * z1 + l.l22 * z2;
    ds.x.at(i, 0) = sq.x(vx);
    ds.x.at(i, 1) = sq.y(vy);
    ds.y.at(i, static_cast<std::size_t>(pick->label)) = 1.0;
    if (bayes_hits && bayes_label(task, vx, vy) == pick->label) *bayes_hits += 1.0;
  }
  return ds;
}

}  // namespace

SyntheticBuildResult build_synthetic_stream_full(const SyntheticStreamSpec& spec) {
  if (spec.tasks.empty()) throw std::runtime_error("empty stream");
  const Squash sq = make_squash(spec);
  Rng rng(spec.seed);

  SyntheticBuildResult out;
  out.stream.shared_head = spec.shared_head;
  int task_id = 0;
  for (const auto& task : spec.tasks) {
    ++task_id;
    if (task.components.empty()) throw std::runtime_error("task without components");
    for (const auto& c : task.components)
      if (c.label < 0 || static_cast<std::size_t>(c.label) >= task.classes)
        throw std::runtime_error("component label out of range");
    Rng task_rng = rng.fork(static_cast<std::uint64_t>(task_id));
    double bayes_hits = 0.0;
    TaskTriple triple;
    triple.train = draw(task, sq, task.n_train, task_id, Split::train, task_rng, nullptr);
    triple.val = draw(task, sq, task.n_val, task_id, Split::val, task_rng, nullptr);
    triple.test = draw(task, sq, task.n_test, task_id, Split::test, task_rng, &bayes_hits);
    out.bayes_accuracy.push_back(bayes_hits / static_cast<double>(task.n_test));
    out.stream.tasks.push_back(std::move(triple));
  }
  out.stream.validate();
  return out;
}

TaskStream build_synthetic_stream(const SyntheticStreamSpec& spec) {
  return build_synthetic_stream_full(spec).stream;
}

SyntheticStreamSpec conflicting_two_task_spec(std::uint64_t seed) {
  const double v = 0.0035;  // sigma ~ 0.06 in squashed units
  // Task 1 separates by x at y = 0.5. Task 2 lives at the SAME x positions
  // but labels purely by y, so fitting it erases task 1's rule: its decision
  // surface becomes ~f(y), and task 1's test points sit on that boundary.
  SyntheticTaskSpec task1;
  task1.components = {{0.25, 0.5, v, v, 0.0, 0, 1.0}, {0.75, 0.5, v, v, 0.0, 1, 1.0}};
  SyntheticTaskSpec task2;
  task2.components = {{0.25, 0.75, v, v, 0.0, 0, 1.0},
                      {0.75, 0.75, v, v, 0.0, 0, 1.0},
                      {0.25, 0.25, v, v, 0.0, 1, 1.0},
                      {0.75, 0.25, v, v, 0.0, 1, 1.0}};
  SyntheticStreamSpec spec;
  spec.tasks = {task1, task2};
  spec.seed = seed;
  spec.shared_head = true;
  return spec;
}

}  // namespace bgr
