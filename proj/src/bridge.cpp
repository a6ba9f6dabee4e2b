#include "dse/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dse/rng.hpp"

namespace dse {

namespace {

void check_step(const BridgeSchedule& s, int t, const char* who) {
    if (t < 0 || t > s.total_steps)
        throw ArgumentError(std::string(who) + ": step index " + std::to_string(t) +
                            " outside [0, " + std::to_string(s.total_steps) + "]");
}

void check_same_size(size_t a, size_t b, const char* who) {
    if (a != b)
        throw ShapeError(std::string(who) + ": array size mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
}

}  // namespace

BridgeSchedule make_schedule(int total_steps, double variance_scale) {
    if (total_steps < 2) throw ConfigError("schedule needs total_steps >= 2");
    if (!(variance_scale > 0.0)) throw ConfigError("schedule variance scale must be > 0");

    BridgeSchedule s;
    s.total_steps = total_steps;
    s.variance_scale = variance_scale;
    s.m.resize(total_steps + 1);
    s.delta.resize(total_steps + 1);
    for (int t = 0; t <= total_steps; ++t) {
        s.m[t] = static_cast<double>(t) / static_cast<double>(total_steps);
        s.delta[t] = 2.0 * variance_scale * s.m[t] * (1.0 - s.m[t]);
    }
    // exact endpoints regardless of rounding
    s.m[0] = 0.0;
    s.m[total_steps] = 1.0;
    s.delta[0] = 0.0;
    s.delta[total_steps] = 0.0;
    return s;
}

StepParams step_params(const BridgeSchedule& schedule, int t_from, int t_to) {
    check_step(schedule, t_from, "step_params");
    check_step(schedule, t_to, "step_params");
    if (t_from >= t_to) throw ArgumentError("step_params requires t_from < t_to");

    const double m_from = schedule.m[t_from];
    const double m_to = schedule.m[t_to];
    StepParams p;
    p.a = (1.0 - m_to) / (1.0 - m_from);
    p.b = m_to - p.a * m_from;
    p.v = schedule.delta[t_to] - p.a * p.a * schedule.delta[t_from];
    if (p.v < 0.0) {
        if (p.v < -1e-12) throw NumericalError("step_params produced negative variance");
        p.v = 0.0;
    }
    return p;
}

std::vector<double> forward_marginal(const BridgeSchedule& schedule,
                                     const std::vector<double>& x0,
                                     const std::vector<double>& y, int t,
                                     const std::vector<double>& eps) {
    check_step(schedule, t, "forward_marginal");
    check_same_size(x0.size(), y.size(), "forward_marginal");
    check_same_size(x0.size(), eps.size(), "forward_marginal");

    if (t == 0) return x0;
    if (t == schedule.total_steps) return y;

    const double m = schedule.m[t];
    const double sd = std::sqrt(schedule.delta[t]);
    std::vector<double> out(x0.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = (1.0 - m) * x0[i] + m * y[i] + sd * eps[i];
    return out;
}

Posterior reverse_posterior(const BridgeSchedule& schedule,
                            const std::vector<double>& x_t,
                            const std::vector<double>& x0_hat,
                            const std::vector<double>& y, int t_from, int t_to) {
    check_step(schedule, t_from, "reverse_posterior");
    check_step(schedule, t_to, "reverse_posterior");
    if (t_to >= t_from) throw ArgumentError("reverse_posterior requires t_to < t_from");
    check_same_size(x_t.size(), x0_hat.size(), "reverse_posterior");
    check_same_size(x_t.size(), y.size(), "reverse_posterior");

    const double m_to = schedule.m[t_to];
    const double delta_to = schedule.delta[t_to];
    const StepParams p = step_params(schedule, t_to, t_from);

    Posterior post;
    post.mean.resize(x_t.size());

    if (delta_to == 0.0) {
        // Pinned earlier state (t_to = 0): the prior is a point mass. Also the
        // documented fallback when both delta_to and v vanish.
        for (size_t i = 0; i < post.mean.size(); ++i)
            post.mean[i] = (1.0 - m_to) * x0_hat[i] + m_to * y[i];
        post.variance = 0.0;
        return post;
    }
    if (p.v == 0.0) {
        if (p.a != 0.0) {
            // Noiseless transition pins x_to given x_t.
            for (size_t i = 0; i < post.mean.size(); ++i)
                post.mean[i] = (x_t[i] - p.b * y[i]) / p.a;
            post.variance = 0.0;
        } else {
            // a = 0 (t_from = T): x_t carries no information about x_to.
            for (size_t i = 0; i < post.mean.size(); ++i)
                post.mean[i] = (1.0 - m_to) * x0_hat[i] + m_to * y[i];
            post.variance = delta_to;
        }
        return post;
    }

    const double precision = p.a * p.a / p.v + 1.0 / delta_to;
    post.variance = 1.0 / precision;
    for (size_t i = 0; i < post.mean.size(); ++i) {
        const double prior_mean = (1.0 - m_to) * x0_hat[i] + m_to * y[i];
        post.mean[i] =
            post.variance * (p.a * (x_t[i] - p.b * y[i]) / p.v + prior_mean / delta_to);
    }
    return post;
}

EpsSource make_empirical_source(const std::vector<double>& values, double scale) {
    if (values.empty()) throw ConfigError("empirical eps pool must be non-empty");
    if (!(scale >= 0.0)) throw ConfigError("eps scale must be non-negative");

    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    if (!(var > 0.0)) throw ConfigError("empirical eps pool has zero variance");

    EpsSource src;
    src.kind = EpsSource::Kind::TargetEmpirical;
    src.scale = scale;
    src.pool.resize(values.size());
    const double inv_sd = 1.0 / std::sqrt(var);
    for (size_t i = 0; i < values.size(); ++i) src.pool[i] = (values[i] - mean) * inv_sd;
    return src;
}

std::vector<double> eps_sample(const EpsSource& source, size_t n, uint64_t seed) {
    std::vector<double> out(n);
    RngStream rng(seed);
    if (source.kind == EpsSource::Kind::StandardNormal) {
        for (double& v : out) v = rng.normal();
    } else {
        if (source.pool.empty()) throw ConfigError("empirical eps source has empty pool");
        for (double& v : out) v = source.pool[rng.uniform_index(source.pool.size())];
    }
    return out;
}

StepSchedule make_step_schedule(int total_steps, int n_steps) {
    if (total_steps < 1) throw ConfigError("step schedule needs total_steps >= 1");
    if (n_steps < 1 || n_steps > total_steps)
        throw ConfigError("step schedule needs 1 <= n_steps <= total_steps");

    StepSchedule out;
    out.steps.reserve(n_steps);
    for (int i = n_steps; i >= 1; --i) {
        int t = static_cast<int>(std::lround(static_cast<double>(i) *
                                             static_cast<double>(total_steps) /
                                             static_cast<double>(n_steps)));
        t = std::clamp(t, 1, total_steps);
        if (out.steps.empty() || t < out.steps.back()) out.steps.push_back(t);
    }
    out.steps.front() = total_steps;
    return out;
}

std::vector<double> reverse_sample(const BridgeSchedule& schedule,
                                   const std::vector<double>& y_latent,
                                   const DisplacementFn& predictor,
                                   const StepSchedule& steps,
                                   const EpsSource& eps_source, uint64_t seed) {
    if (steps.steps.empty() || steps.steps.front() != schedule.total_steps)
        throw ConfigError("step schedule must start at T");

    std::vector<double> x = y_latent;
    std::vector<int> path = steps.steps;
    path.push_back(0);  // final target

    for (size_t k = 0; k + 1 < path.size(); ++k) {
        const int t_cur = path[k];
        const int t_next = path[k + 1];

        std::vector<double> d_hat = predictor(x, t_cur);
        check_same_size(d_hat.size(), x.size(), "reverse_sample predictor");
        std::vector<double> x0_hat(x.size());
        for (size_t i = 0; i < x.size(); ++i) x0_hat[i] = x[i] - d_hat[i];

        Posterior post = reverse_posterior(schedule, x, x0_hat, y_latent, t_cur, t_next);

        if (eps_source.scale > 0.0 && post.variance > 0.0) {
            const std::vector<double> eps =
                eps_sample(eps_source, x.size(), RngStream(seed, k).next_u64());
            const double sd = eps_source.scale * std::sqrt(post.variance);
            for (size_t i = 0; i < x.size(); ++i) x[i] = post.mean[i] + sd * eps[i];
        } else {
            x = std::move(post.mean);
        }

        for (double v : x)
            if (!std::isfinite(v))
                throw NumericalError("non-finite latent at reverse step t=" +
                                     std::to_string(t_cur) + " -> " + std::to_string(t_next));
    }
    return x;
}

std::string schedule_to_json(const BridgeSchedule& schedule) {
    std::ostringstream out;
    out.precision(17);
    out << "[";
    for (int t = 0; t <= schedule.total_steps; ++t) {
        if (t) out << ",";
        out << "{\"t\":" << t << ",\"m\":" << schedule.m[t]
            << ",\"delta\":" << schedule.delta[t] << "}";
    }
    out << "]";
    return out.str();
}

}  // namespace dse
