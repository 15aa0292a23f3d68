#pragma once

#include <functional>
#include <iosfwd>

#include "bgr/posterior.hpp"

namespace bgr::check {

// (f(x+h) - f(x-h)) / 2h
double central_diff(const std::function<double(double)>& f, double x,
                    double h = 1e-5);

// |a - b| scaled by max(1, |a|, |b|)
double rel_err(double a, double b);

// KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)) by Simpson's rule over
// mu_q +- 12 sigma_q; independent of the closed form under test.
double quadrature_kl_1d(double mu_q, double sigma_q, double mu_p, double sigma_p,
                        std::size_t intervals = 4000);

}  // namespace bgr::check

namespace bgr {

// Seam for the corrupted-formula fixture: the KL checks call this instead of
// kl_divergence when set, and the suite must then fail.
struct SelfcheckHooks {
  std::function<double(const GaussianPosterior&, const GaussianPosterior&)> kl{};
};

// Fast oracle suite; prints one `[ok]`/`[FAIL]` line per named check.
// Returns true iff every check passed.
bool run_selfcheck(std::ostream& out, const SelfcheckHooks& hooks = {});

}  // namespace bgr
