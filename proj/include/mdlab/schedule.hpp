#pragma once

#include <cstdint>
#include <optional>

#include <json.hpp>

#include "mdlab/masking.hpp"

namespace mdlab {

enum class ScheduleKind { signal_optimal, complexity_optimal };

const char* to_string(ScheduleKind kind) noexcept;

struct OptimalScheduleResult {
    ScheduleKind kind = ScheduleKind::signal_optimal;
    int k = 1;
    double t0 = 0.0;
    double t1 = 0.0;
    // P_S for signal_optimal, mean_t * rho_k^2 for complexity_optimal.
    double objective_value = 0.0;
    // |p(y*)| for the root-based result, 0 otherwise.
    double residual = 0.0;

    Schedule schedule() const { return Schedule::uniform(t0, t1); }
};

struct Moments {
    double mean_t = 0.0;
    double rho_k = 1.0;  // E[(1 - t)^k]
};

Moments moments(const Schedule& schedule, int k);

// Point mass at 1 / (k + 1).
OptimalScheduleResult signal_optimal_rate(int k);

// p(y) = (2k + 1) y^{k+1} - (2k + 2) y^k + 1.
double complexity_polynomial(int k, double y);

// k == 1: canonical (0, 2/3) from the mean-1/3 family. k > 1: (0, 1 - y*)
// where y* is the root of p in (0, 1) found by bisection on [1e-9, 1 - 1e-9].
OptimalScheduleResult complexity_optimal_schedule(int k);

// ceil(4 ln(4n / delta) / (mean_t rho_k^2)); nullopt when the denominator is 0.
std::optional<std::int64_t> sample_complexity_bound(int n, int k, double delta, const Schedule& schedule);

// Minimum expected cross-entropy at a feature: ln 2 off the secret,
// (1 - (1 - t)^k) ln 2 on it.
double bayes_risk(bool in_secret, double t, int k);
// rho_k ln 2.
double loss_gap(const Schedule& schedule, int k);

// {k, kind, t0, t1, objective_value, residual, N_min?}
nlohmann::json to_json(const OptimalScheduleResult& result, std::optional<std::int64_t> n_min = std::nullopt);

}  // namespace mdlab
