#include "bgr/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "bgr/ebm.hpp"
#include "bgr/grid_oracle.hpp"
#include "bgr/sampler.hpp"

namespace bgr::check {

double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double quadrature_kl_1d(double mu_q, double sigma_q, double mu_p, double sigma_p,
                        std::size_t intervals) {
  if (intervals % 2 != 0) ++intervals;
  const double lo = mu_q - 12.0 * sigma_q, hi = mu_q + 12.0 * sigma_q;
  const double h = (hi - lo) / static_cast<double>(intervals);
  auto log_pdf = [](double x, double m, double s) {
    const double z = (x - m) / s;
    return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * 3.14159265358979323846);
  };
  auto integrand = [&](double x) {
    const double lq = log_pdf(x, mu_q, sigma_q);
    return std::exp(lq) * (lq - log_pdf(x, mu_p, sigma_p));
  };
  double acc = integrand(lo) + integrand(hi);
  for (std::size_t i = 1; i < intervals; ++i)
    acc += (i % 2 ? 4.0 : 2.0) * integrand(lo + h * static_cast<double>(i));
  return acc * h / 3.0;
}

}  // namespace bgr::check

namespace bgr {
namespace {

struct Suite {
  std::ostream& out;
  bool ok = true;

  void report(const std::string& name, bool pass, const std::string& detail) {
    out << (pass ? "[ok]   " : "[FAIL] ") << name << " — " << detail << "\n";
    ok = ok && pass;
  }
};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << std::scientific << v;
  return s.str();
}

MlpArchitecture tiny_arch() {
  MlpArchitecture a;
  a.input_dim = 5;
  a.hidden_dims = {8, 7};
  a.heads = {{0, 3}, {1, 2}};
  return a;
}

ParamVector random_params(const std::shared_ptr<const ParamLayout>& layout,
                          Rng& rng, double half_range) {
  ParamVector v = ParamVector::zeros(layout);
  for (auto& x : v.values) x = (2.0 * rng.uniform() - 1.0) * half_range;
  return v;
}

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo, double hi) {
  Tensor t = Tensor::zeros({r, c});
  for (auto& x : t.data) x = lo + (hi - lo) * rng.uniform();
  return t;
}

// max_i |a_i - b_i| / max(1, max_i |a_i|)
double vec_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 1.0, diff = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < a.size(); ++i)
    diff = std::max(diff, std::abs(a[i] - b[i]));
  return diff / scale;
}

// f evaluated while one coordinate of v is bumped
std::vector<double> fd_grad(std::vector<double>& v,
                            const std::function<double()>& f, double h = 1e-5) {
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double up = f();
    v[i] = keep - h;
    const double down = f();
    v[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// simple quadratic Langevin target: grad of log N(c, tau2) in 1-D
struct QuadEval : ChainEval {
  Tensor lg, x;
  double c, tau2;
  QuadEval(const Tensor& xin, double c_, double tau2_)
      : lg(Tensor::zeros({xin.rows(), 1})), x(xin), c(c_), tau2(tau2_) {}
  const Tensor& logits() const override { return lg; }
  Tensor grad_x(const Tensor&) const override {
    Tensor g = Tensor::zeros({x.rows(), 1});
    for (std::size_t r = 0; r < x.rows(); ++r)
      g.at(r, 0) = -(x.at(r, 0) - c) / tau2;
    return g;
  }
};

struct QuadTarget : ChainTarget {
  double c, tau2;
  QuadTarget(double c_, double tau2_) : c(c_), tau2(tau2_) {}
  std::size_t classes() const override { return 1; }
  std::size_t input_dim() const override { return 1; }
  std::unique_ptr<ChainEval> at(const Tensor& x) const override {
    return std::make_unique<QuadEval>(x, c, tau2);
  }
};

void check_mlp_grads(Suite& s) {
  const MlpArchitecture arch = tiny_arch();
  const auto layout = make_layout(arch);
  Rng rng(2024);
  ParamVector theta = random_params(layout, rng, 0.6);
  Tensor x = random_tensor(4, 5, rng, 0.0, 1.0);
  Tensor w = random_tensor(4, 3, rng, -1.0, 1.0);

  auto weighted_logits = [&]() {
    Tensor lg = forward(theta, arch, x, 0);
    double j = 0.0;
    for (std::size_t i = 0; i < lg.size(); ++i) j += w.data[i] * lg.data[i];
    return j;
  };

  ParamVector an = backward_params(theta, arch, x, 0, w);
  std::vector<double> fd = fd_grad(theta.values, weighted_logits);
  double err = vec_rel_err(an.values, fd);
  s.report("mlp-backward-fd", err < 1e-6, "max rel err " + fmt(err));

  Tensor y = Tensor::zeros({4, 3});  // grad_input wants one-hot selectors
  for (std::size_t r = 0; r < 4; ++r) y.at(r, rng.below(3)) = 1.0;
  auto selected_logits = [&]() {
    Tensor lg = forward(theta, arch, x, 0);
    double j = 0.0;
    for (std::size_t i = 0; i < lg.size(); ++i) j += y.data[i] * lg.data[i];
    return j;
  };
  Tensor gin = grad_input(theta, arch, x, 0, y);
  fd = fd_grad(x.data, selected_logits);
  err = vec_rel_err(gin.data, fd);
  s.report("mlp-input-grad-fd", err < 1e-6, "max rel err " + fmt(err));
}

void check_reparam(Suite& s) {
  const MlpArchitecture arch = tiny_arch();
  const auto layout = make_layout(arch);
  Rng rng(77);
  GaussianPosterior q{random_params(layout, rng, 0.5), random_params(layout, rng, 0.0)};
  for (auto& r : q.rho.values) r = -2.0 + 1.5 * rng.uniform();
  ParamVector eps = ParamVector::zeros(layout);
  for (auto& e : eps.values) e = rng.normal();
  Tensor x = random_tensor(3, 5, rng, 0.0, 1.0);
  Tensor w = random_tensor(3, 2, rng, -1.0, 1.0);

  auto build_theta = [&]() {
    ParamVector t = ParamVector::zeros(layout);
    for (std::size_t i = 0; i < t.values.size(); ++i)
      t.values[i] = q.mu.values[i] + softplus(q.rho.values[i]) * eps.values[i];
    return t;
  };
  auto value = [&]() {
    Tensor lg = forward(build_theta(), arch, x, 1);
    double j = 0.0;
    for (std::size_t i = 0; i < lg.size(); ++i) j += w.data[i] * lg.data[i];
    return j;
  };

  VariationalGrad an =
      reparam_backward(backward_params(build_theta(), arch, x, 1, w), eps, q.rho);
  std::vector<double> fd_mu = fd_grad(q.mu.values, value);
  std::vector<double> fd_rho = fd_grad(q.rho.values, value);
  const double err = std::max(vec_rel_err(an.mu.values, fd_mu),
                              vec_rel_err(an.rho.values, fd_rho));
  s.report("reparam-grad-fd", err < 1e-6, "max rel err " + fmt(err));
}

void check_nll(Suite& s) {
  const MlpArchitecture arch = tiny_arch();
  const auto layout = make_layout(arch);
  Rng rng(31);
  ParamVector theta = random_params(layout, rng, 0.6);
  Tensor x = random_tensor(4, 5, rng, 0.0, 1.0);
  Tensor y = Tensor::zeros({4, 3});
  for (std::size_t r = 0; r < 4; ++r) y.at(r, rng.below(3)) = 1.0;

  MlpEnergy fn(arch, 0, Precision::f64);
  auto value = [&]() {
    Tensor probs = conditional_probs(forward(theta, arch, x, 0));
    double nll = 0.0;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        if (y.at(r, c) == 1.0) nll -= std::log(probs.at(r, c));
    return nll / 4.0;
  };

  ParamVector an = nll_grad(fn, theta, x, y);
  std::vector<double> fd = fd_grad(theta.values, value);
  const double err = vec_rel_err(an.values, fd);
  s.report("nll-grad-fd", err < 1e-6, "max rel err " + fmt(err));
}

void check_kl(Suite& s, const SelfcheckHooks& hooks) {
  auto kl = hooks.kl ? hooks.kl
                     : [](const GaussianPosterior& a, const GaussianPosterior& b) {
                         return kl_divergence(a, b);
                       };

  const MlpArchitecture arch = tiny_arch();
  const auto layout = make_layout(arch);
  Rng rng(55);
  GaussianPosterior q{random_params(layout, rng, 0.3), ParamVector::zeros(layout)};
  GaussianPosterior p{random_params(layout, rng, 0.3), ParamVector::zeros(layout)};
  for (auto& r : q.rho.values) r = -2.0 + 1.5 * rng.uniform();
  for (auto& r : p.rho.values) r = -2.0 + 1.5 * rng.uniform();

  VariationalGrad an = kl_gradients(q, p);
  auto value = [&]() { return kl(q, p); };
  std::vector<double> fd_mu = fd_grad(q.mu.values, value);
  std::vector<double> fd_rho = fd_grad(q.rho.values, value);
  const double gerr = std::max(vec_rel_err(an.mu.values, fd_mu),
                               vec_rel_err(an.rho.values, fd_rho));
  s.report("kl-grad-fd", gerr < 1e-6, "max rel err " + fmt(gerr));

  auto scalar_layout = std::make_shared<ParamLayout>();
  scalar_layout->segments.push_back(ParamSegment{0, true, -1, 0, 1, 1, 1});
  scalar_layout->total_size = 1;
  GaussianPosterior q1{ParamVector{{0.3}, scalar_layout},
                       ParamVector{{softplus_inv(0.8)}, scalar_layout}};
  GaussianPosterior p1{ParamVector{{-0.4}, scalar_layout},
                       ParamVector{{softplus_inv(1.7)}, scalar_layout}};
  const double closed = kl(q1, p1);
  const double quad = check::quadrature_kl_1d(0.3, 0.8, -0.4, 1.7);
  const double qerr = check::rel_err(closed, quad);
  s.report("kl-quadrature", qerr < 1e-7,
           "closed " + fmt(closed) + " vs quadrature " + fmt(quad));
}

void check_prop1(Suite& s) {
  DiscreteCausalJoint causal;
  causal.p_thetaS = {0.3, 0.7};
  causal.p_D_given_thetaS = {{0.2, 0.5, 0.3}, {0.6, 0.1, 0.3}};
  causal.p_thetat_given_D = {{0.9, 0.1}, {0.4, 0.6}, {0.25, 0.75}};
  const double dev = proposition1_check(causal);

  DiscreteJoint3 broken;
  broken.ns = broken.nd = broken.nt = 2;
  broken.p.assign(8, 0.0);
  broken.at(0, 0, 0) = 0.25;
  broken.at(0, 1, 0) = 0.25;
  broken.at(1, 0, 1) = 0.25;
  broken.at(1, 1, 1) = 0.25;
  const double dev2 = factorization_deviation(broken);

  s.report("prop1-causal-factorization", dev < 1e-12 && dev2 > 0.1,
           "causal dev " + fmt(dev) + ", coupled counterexample " + fmt(dev2));
}

void check_grid(Suite& s) {
  const MlpArchitecture arch = tiny_arch();
  const auto layout = make_layout(arch);
  Rng rng(90);
  ParamVector theta = random_params(layout, rng, 0.6);
  MlpEnergy fn(arch, 0, Precision::f64);

  GridEbmSpec grid;
  grid.x_grid = random_tensor(6, 5, rng, 0.0, 1.0);
  grid.classes = 3;

  LabeledBatch data;
  const std::size_t picks[4] = {0, 2, 3, 5};
  data.x = Tensor::zeros({4, 5});
  data.y = Tensor::zeros({4, 3});
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 5; ++c) data.x.at(r, c) = grid.x_grid.at(picks[r], c);
    data.y.at(r, rng.below(3)) = 1.0;
  }

  auto joint_loglik = [&]() {
    Tensor lg = forward(theta, arch, data.x, 0);
    double j = 0.0;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 3; ++c) j += data.y.at(r, c) * lg.at(r, c);
    return j / 4.0 - exact_log_partition(fn, theta, grid);
  };
  ParamVector an = exact_cd_joint_grad(fn, theta, grid, data);
  std::vector<double> fd = fd_grad(theta.values, joint_loglik);
  double err = vec_rel_err(an.values, fd);
  s.report("eq6-grid-enumeration", err < 1e-6, "max rel err " + fmt(err));

  Tensor xb = Tensor::zeros({2, 5});
  for (std::size_t c = 0; c < 5; ++c) {
    xb.at(0, c) = grid.x_grid.at(1, c);
    xb.at(1, c) = grid.x_grid.at(4, c);
  }
  auto marginal_loglik = [&]() {
    return 0.5 * (exact_grid_logp(fn, theta, grid, grid.row(1)) +
                  exact_grid_logp(fn, theta, grid, grid.row(4)));
  };
  an = exact_logpx_grad(fn, theta, grid, xb);
  fd = fd_grad(theta.values, marginal_loglik);
  err = vec_rel_err(an.values, fd);
  s.report("thm2-marginal-grad", err < 1e-6, "max rel err " + fmt(err));
}

void check_sgld(Suite& s) {
  const double c = 0.3, tau2 = 0.04, eta = 0.01;
  QuadTarget target(c, tau2);

  SgldConfig config;
  config.steps = 3000;
  config.base_step = eta;
  config.noise = SgldNoise::eta_scaled;
  config.schedule = SgldSchedule::constant;
  config.reinit_rate = 0.0;
  config.clamp_lo = -1e9;
  config.clamp_hi = 1e9;
  config.chain_batch = 20;
  config.noise_std = 0.0;  // unused under eta_scaled

  ReplayBuffer buffer(config.chain_batch, 1, 1);
  Tensor x0 = Tensor::zeros({1, 1});
  Tensor y0 = Tensor::constant({1, 1}, 1.0);
  for (std::size_t i = 0; i < config.chain_batch; ++i) {
    x0.at(0, 0) = c;
    buffer_push(buffer, x0, y0, config.clamp_lo, config.clamp_hi);
  }

  double sum = 0.0, sumsq = 0.0;
  std::size_t n = 0;
  auto observer = [&](std::size_t step, double, const Tensor& x) {
    if (step <= 500) return;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      sum += x.at(r, 0);
      sumsq += x.at(r, 0) * x.at(r, 0);
      ++n;
    }
  };
  Rng rng(4242);
  sample_chain(target, buffer, config, rng, -1, observer);

  const double mean = sum / static_cast<double>(n);
  const double var = sumsq / static_cast<double>(n) - mean * mean;
  const double predicted = tau2 / (1.0 - eta / (4.0 * tau2));
  const double verr = std::abs(var - predicted) / predicted;
  s.report("sgld-quadratic-stationarity",
           std::abs(mean - c) < 0.03 && verr < 0.18,
           "mean " + fmt(mean) + ", var " + fmt(var) + " vs " + fmt(predicted));

  SgldConfig sched;
  sched.steps = 7;
  sched.base_step = 10.0;
  sched.noise_std = 0.0;
  sched.reinit_rate = 0.0;
  sched.chain_batch = 1;
  sched.clamp_lo = -1e9;
  sched.clamp_hi = 1e9;
  ReplayBuffer b2(1, 1, 1);
  x0.at(0, 0) = c;
  buffer_push(b2, x0, y0, sched.clamp_lo, sched.clamp_hi);
  bool schedule_ok = true;
  std::size_t seen = 0;
  auto sched_obs = [&](std::size_t step, double eta_s, const Tensor&) {
    ++seen;
    schedule_ok = schedule_ok && eta_s == 10.0 / static_cast<double>(step);
  };
  Rng rng2(1);
  sample_chain(target, b2, sched, rng2, -1, sched_obs);
  s.report("sgld-step-schedule", schedule_ok && seen == sched.steps,
           "eta_s = eta0/s over " + std::to_string(seen) + " steps");
}

}  // namespace

bool run_selfcheck(std::ostream& out, const SelfcheckHooks& hooks) {
  Suite s{out};
  check_mlp_grads(s);
  check_reparam(s);
  check_nll(s);
  check_kl(s, hooks);
  check_prop1(s);
  check_grid(s);
  check_sgld(s);
  out << (s.ok ? "selfcheck: all checks passed\n" : "selfcheck: FAILURES\n");
  return s.ok;
}

}  // namespace bgr
