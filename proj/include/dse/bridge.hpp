#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dse/error.hpp"

namespace dse {

// Brownian-bridge diffusion tables. The process is pinned at both ends:
// x_0 is the target latent, x_T = y is the source latent. The marginal at
// step t is N((1-m_t) x_0 + m_t y, delta_t I) with
//   m_t     = t / T
//   delta_t = 2 s m_t (1 - m_t)
// so m_0 = 0, m_T = 1 and delta_0 = delta_T = 0 hold exactly.
struct BridgeSchedule {
    int total_steps = 0;        // T
    double variance_scale = 0;  // s
    std::vector<double> m;      // size T+1
    std::vector<double> delta;  // size T+1
};

BridgeSchedule make_schedule(int total_steps, double variance_scale = 1.0);

// Coefficients of the Gaussian transition q(x_to | x_from, y) for
// t_from < t_to:  x_to = a x_from + b y + sqrt(v) eps.
// Derived from the marginals:
//   a = (1 - m_to) / (1 - m_from)
//   b = m_to - a m_from
//   v = delta_to - a^2 delta_from      (clamped at 0)
// Chaining these over any path 0 = t_0 < ... < t_k reproduces the marginal
// coefficients (1 - m_k, m_k, delta_k); that identity is the module's main
// self-consistency check.
struct StepParams {
    double a = 0;
    double b = 0;
    double v = 0;
};

StepParams step_params(const BridgeSchedule& schedule, int t_from, int t_to);

// x_t = (1 - m_t) x0 + m_t y + sqrt(delta_t) eps, elementwise.
// t = 0 returns x0 and t = T returns y bitwise.
std::vector<double> forward_marginal(const BridgeSchedule& schedule,
                                     const std::vector<double>& x0,
                                     const std::vector<double>& y, int t,
                                     const std::vector<double>& eps);

struct Posterior {
    std::vector<double> mean;
    double variance = 0;  // shared scalar variance
};

// Conjugate-Gaussian posterior q(x_to | x_t, x0_hat, y) for t_to < t_from,
// combining the bridge prior N((1-m_to) x0_hat + m_to y, delta_to) with the
// transition likelihood x_t = a x_to + b y + N(0, v):
//   var  = (a^2/v + 1/delta_to)^-1
//   mean = var * (a (x_t - b y)/v + prior_mean/delta_to)
// Degenerate branches: delta_to = 0 returns (prior mean, 0); v = 0 with
// a != 0 returns ((x_t - b y)/a, 0); v = 0 with a = 0 means x_t carries no
// information, so the prior is returned unchanged. When delta_to and v are
// both 0 the prior mean with zero variance wins.
Posterior reverse_posterior(const BridgeSchedule& schedule,
                            const std::vector<double>& x_t,
                            const std::vector<double>& x0_hat,
                            const std::vector<double>& y, int t_from, int t_to);

// Where reverse-process noise comes from. STANDARD_NORMAL draws N(0,1);
// TARGET_EMPIRICAL draws uniformly with replacement from a standardized
// pool of target-domain latent values. `scale` multiplies the posterior
// noise during sampling (it is NOT applied by eps_sample itself).
struct EpsSource {
    enum class Kind { StandardNormal, TargetEmpirical };
    Kind kind = Kind::StandardNormal;
    std::vector<double> pool;  // standardized to mean 0, variance 1
    double scale = 0.1;
};

// Standardizes `values` into an empirical pool. A zero-variance input
// cannot be standardized and is a config error.
EpsSource make_empirical_source(const std::vector<double>& values, double scale = 0.1);

std::vector<double> eps_sample(const EpsSource& source, size_t n, uint64_t seed);

// Strictly decreasing sampling-step subsequence of (0, T], starting at T.
struct StepSchedule {
    std::vector<int> steps;
};

// n_steps values round(i*T/n_steps) for i = n_steps..1, deduplicated.
StepSchedule make_step_schedule(int total_steps, int n_steps);

// Displacement estimate D_hat(x_t, t) with x0_hat = x_t - D_hat.
using DisplacementFn =
    std::function<std::vector<double>(const std::vector<double>& x_t, int t)>;

// Reverse sampler. Starts at x = y (t = T) and walks the step schedule down
// to 0, each move sampling x = mean + scale * sqrt(var) * eps from the
// reverse posterior. With source.scale = 0 the trajectory is deterministic.
// Skipped steps use the exact bridge transition between the two step
// indices, so coarse schedules remain consistent with the full chain.
std::vector<double> reverse_sample(const BridgeSchedule& schedule,
                                   const std::vector<double>& y_latent,
                                   const DisplacementFn& predictor,
                                   const StepSchedule& steps,
                                   const EpsSource& eps_source, uint64_t seed);

// Debug dump of (t, m_t, delta_t) triples as a JSON array string.
std::string schedule_to_json(const BridgeSchedule& schedule);

}  // namespace dse
