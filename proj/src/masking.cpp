#include "mdlab/masking.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace mdlab {

Schedule Schedule::uniform(double t0, double t1) {
    if (!(t0 >= 0.0 && t0 <= t1 && t1 <= 1.0)) {
        throw std::invalid_argument(fmt::format("schedule needs 0 <= t0 <= t1 <= 1, got [{}, {}]", t0, t1));
    }
    return Schedule{t0, t1};
}

MaskVector MaskVector::from_set(int n_prime, const std::vector<int>& positions) {
    auto mask = none(n_prime);
    for (int j : positions) {
        if (j < 1 || j > n_prime) {
            throw std::out_of_range(fmt::format("mask position {} outside [1, {}]", j, n_prime));
        }
        mask.m[static_cast<std::size_t>(j - 1)] = 1;
    }
    return mask;
}

MaskVector MaskVector::from_bits(int n_prime, std::uint32_t bits) {
    auto mask = none(n_prime);
    for (int j = 0; j < n_prime; ++j) {
        mask.m[static_cast<std::size_t>(j)] = static_cast<std::uint8_t>((bits >> j) & 1u);
    }
    return mask;
}

std::vector<int> MaskVector::masked_set() const {
    std::vector<int> out;
    for (std::size_t j = 0; j < m.size(); ++j) {
        if (m[j]) {
            out.push_back(static_cast<int>(j) + 1);
        }
    }
    return out;
}

int MaskVector::count() const noexcept {
    int c = 0;
    for (auto b : m) {
        c += b;
    }
    return c;
}

const char* to_string(Regime r) noexcept {
    return r == Regime::signal ? "signal" : "noise";
}

double sample_rate(const Schedule& schedule, Rng& rng) {
    if (schedule.is_point_mass()) {
        return schedule.t0;
    }
    return schedule.t0 + schedule.width() * rng.uniform();
}

MaskVector sample_mask(double t, int n_prime, Rng& rng) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::invalid_argument(fmt::format("masking rate must lie in [0, 1], got {}", t));
    }
    auto mask = MaskVector::none(n_prime);
    for (auto& b : mask.m) {
        b = rng.bernoulli(t) ? 1 : 0;
    }
    return mask;
}

CorruptedSequence corrupt(const FullSequence& x, const MaskVector& mask) {
    if (x.size() != mask.size()) {
        throw std::invalid_argument(fmt::format("sequence length {} differs from mask length {}", x.size(), mask.size()));
    }
    CorruptedSequence out{x.bits};
    for (std::size_t j = 0; j < out.values.size(); ++j) {
        if (mask.m[j]) {
            out.values[j] = 0;
        }
    }
    return out;
}

MaskVector evaluation_mask(int n_prime) {
    return MaskVector::from_set(n_prime, {n_prime});
}

Regime classify_regime(const MaskVector& mask, const TaskSpec& spec) {
    if (static_cast<int>(mask.size()) != spec.n_prime()) {
        throw std::invalid_argument("mask length differs from n + 1");
    }
    int hits = mask.masked(spec.n_prime()) ? 1 : 0;
    for (int j : spec.secret) {
        hits += mask.masked(j) ? 1 : 0;
    }
    return hits == 1 ? Regime::signal : Regime::noise;
}

SignalProbability signal_probability(const Schedule& schedule, int k) {
    if (k < 1) {
        throw std::invalid_argument("signal probability needs k >= 1");
    }
    const auto s = Schedule::uniform(schedule.t0, schedule.t1);
    double ps;
    if (s.is_point_mass()) {
        ps = (k + 1) * s.t0 * std::pow(1.0 - s.t0, k);
    } else {
        // With u = 1 - t, the antiderivative of t (1 - t)^k is -(u^{k+1}/(k+1) - u^{k+2}/(k+2)).
        auto antiderivative = [k](double u) {
            return std::pow(u, k + 1) / (k + 1) - std::pow(u, k + 2) / (k + 2);
        };
        ps = (k + 1) * (antiderivative(1.0 - s.t0) - antiderivative(1.0 - s.t1)) / s.width();
    }
    return {ps, 1.0 - ps};
}

double empirical_signal_probability(const Schedule& schedule, const TaskSpec& spec, std::int64_t trials, Rng& rng) {
    if (trials < 1) {
        throw std::invalid_argument("need at least one trial");
    }
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < trials; ++i) {
        const double t = sample_rate(schedule, rng);
        const auto mask = sample_mask(t, spec.n_prime(), rng);
        hits += classify_regime(mask, spec) == Regime::signal ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(trials);
}

double uniform_beta_moment(const Schedule& schedule, int a, int b) {
    if (a < 0 || b < 0) {
        throw std::invalid_argument("beta moment exponents must be nonnegative");
    }
    if (schedule.is_point_mass()) {
        return std::pow(schedule.t0, a) * std::pow(1.0 - schedule.t0, b);
    }
    // t^a = (1 - u)^a = sum_i C(a, i) (-1)^i u^i, so
    // int t^a (1-t)^b dt = -G(u) with G(u) = sum_i C(a, i) (-1)^i u^{i+b+1} / (i+b+1).
    auto G = [a, b](double u) {
        double sum = 0.0;
        double binom = 1.0;
        for (int i = 0; i <= a; ++i) {
            const double term = binom * std::pow(u, i + b + 1) / (i + b + 1);
            sum += (i % 2 == 0) ? term : -term;
            binom = binom * (a - i) / (i + 1);
        }
        return sum;
    };
    return (G(1.0 - schedule.t0) - G(1.0 - schedule.t1)) / schedule.width();
}

}  // namespace mdlab
