#include "mdlab/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

namespace mdlab {

namespace {

void require_k(int k) {
    if (k < 1) {
        throw std::invalid_argument(fmt::format("k must be >= 1, got {}", k));
    }
}

}  // namespace

const char* to_string(ScheduleKind kind) noexcept {
    return kind == ScheduleKind::signal_optimal ? "signal_optimal" : "complexity_optimal";
}

Moments moments(const Schedule& schedule, int k) {
    require_k(k);
    const auto s = Schedule::uniform(schedule.t0, schedule.t1);
    Moments m;
    m.mean_t = 0.5 * (s.t0 + s.t1);
    if (s.is_point_mass()) {
        m.rho_k = std::pow(1.0 - s.t0, k);
    } else {
        m.rho_k = (std::pow(1.0 - s.t0, k + 1) - std::pow(1.0 - s.t1, k + 1)) / (s.width() * (k + 1));
    }
    return m;
}

OptimalScheduleResult signal_optimal_rate(int k) {
    require_k(k);
    OptimalScheduleResult r;
    r.kind = ScheduleKind::signal_optimal;
    r.k = k;
    r.t0 = r.t1 = 1.0 / (k + 1);
    r.objective_value = signal_probability(Schedule::point(r.t0), k).signal;
    return r;
}

double complexity_polynomial(int k, double y) {
    // y^k ((2k + 1) y - (2k + 2)) + 1
    return std::pow(y, k) * ((2.0 * k + 1.0) * y - (2.0 * k + 2.0)) + 1.0;
}

OptimalScheduleResult complexity_optimal_schedule(int k) {
    require_k(k);
    OptimalScheduleResult r;
    r.kind = ScheduleKind::complexity_optimal;
    r.k = k;
    r.t0 = 0.0;
    if (k == 1) {
        r.t1 = 2.0 / 3.0;
    } else {
        double lo = 1e-9;
        double hi = 1.0 - 1e-9;
        double plo = complexity_polynomial(k, lo);
        const double phi = complexity_polynomial(k, hi);
        if (!(plo > 0.0 && phi < 0.0)) {
            throw std::runtime_error(
                fmt::format("bracketing failed for k = {}: p({}) = {}, p({}) = {}", k, lo, plo, hi, phi));
        }
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double pm = complexity_polynomial(k, mid);
            if (pm == 0.0) {
                lo = hi = mid;
                break;
            }
            if ((pm > 0.0) == (plo > 0.0)) {
                lo = mid;
                plo = pm;
            } else {
                hi = mid;
            }
        }
        const double rlo = std::abs(complexity_polynomial(k, lo));
        const double rhi = std::abs(complexity_polynomial(k, hi));
        const double y = rlo <= rhi ? lo : hi;
        r.t1 = 1.0 - y;
        r.residual = std::min(rlo, rhi);
    }
    const auto m = moments(r.schedule(), k);
    r.objective_value = m.mean_t * m.rho_k * m.rho_k;
    return r;
}

std::optional<std::int64_t> sample_complexity_bound(int n, int k, double delta, const Schedule& schedule) {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw std::invalid_argument(fmt::format("delta must lie in (0, 1), got {}", delta));
    }
    if (n < 1) {
        throw std::invalid_argument("n must be >= 1");
    }
    const auto m = moments(schedule, k);
    const double denom = m.mean_t * m.rho_k * m.rho_k;
    if (!(denom > 0.0)) {
        return std::nullopt;
    }
    const double bound = 4.0 * std::log(4.0 * n / delta) / denom;
    // Guard against 199.99999999999997 style round-off.
    const double nearest = std::round(bound);
    const double value = std::abs(bound - nearest) < 1e-9 * std::max(1.0, nearest) ? nearest : std::ceil(bound);
    return static_cast<std::int64_t>(value);
}

double bayes_risk(bool in_secret, double t, int k) {
    require_k(k);
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::invalid_argument(fmt::format("rate must lie in [0, 1], got {}", t));
    }
    if (!in_secret) {
        return std::numbers::ln2;
    }
    return (1.0 - std::pow(1.0 - t, k)) * std::numbers::ln2;
}

double loss_gap(const Schedule& schedule, int k) {
    return moments(schedule, k).rho_k * std::numbers::ln2;
}

nlohmann::json to_json(const OptimalScheduleResult& result, std::optional<std::int64_t> n_min) {
    nlohmann::json j{{"k", result.k},
                     {"kind", to_string(result.kind)},
                     {"t0", result.t0},
                     {"t1", result.t1},
                     {"objective_value", result.objective_value},
                     {"residual", result.residual}};
    if (n_min) {
        j["N_min"] = *n_min;
    }
    return j;
}

}  // namespace mdlab
