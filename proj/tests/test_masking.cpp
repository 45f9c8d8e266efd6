#include <doctest.h>

#include <cmath>

#include "mdlab/masking.hpp"
#include "quadrature.hpp"

using namespace mdlab;

namespace {

// Oracle: sum over all 2^n' masks of P(M | t) [Signal].
double brute_signal_probability(double t, const TaskSpec& spec) {
    const int np = spec.n_prime();
    double p = 0.0;
    for (std::uint32_t bits = 0; bits < (1u << np); ++bits) {
        const auto mask = MaskVector::from_bits(np, bits);
        const int c = mask.count();
        if (classify_regime(mask, spec) == Regime::signal) {
            p += std::pow(t, c) * std::pow(1.0 - t, np - c);
        }
    }
    return p;
}

}  // namespace

TEST_CASE("regime classification counts masked extended-secret positions") {
    const auto spec = TaskSpec::make(4, {1, 3});
    CHECK(classify_regime(MaskVector::from_set(5, {1}), spec) == Regime::signal);
    CHECK(classify_regime(MaskVector::from_set(5, {5, 2}), spec) == Regime::signal);
    CHECK(classify_regime(MaskVector::from_set(5, {1, 5}), spec) == Regime::noise);
    CHECK(classify_regime(MaskVector::from_set(5, {2, 4}), spec) == Regime::noise);
    CHECK(classify_regime(MaskVector::none(5), spec) == Regime::noise);
    CHECK_THROWS(classify_regime(MaskVector::none(4), spec));
    CHECK_THROWS(MaskVector::from_set(5, {6}));
}

TEST_CASE("signal probability matches mask enumeration and quadrature") {
    const auto spec = TaskSpec::make(6, {1, 2, 5});
    for (double t : {0.0, 0.1, 0.25, 0.5, 0.9, 1.0}) {
        CHECK(signal_probability(Schedule::point(t), 3).signal ==
              doctest::Approx(brute_signal_probability(t, spec)).epsilon(1e-12));
    }
    for (auto [t0, t1] : {std::pair{0.0, 1.0}, {0.0, 0.2}, {0.3, 0.7}}) {
        const double q = gauss_legendre([&](double t) { return brute_signal_probability(t, spec); }, t0, t1) / (t1 - t0);
        const auto p = signal_probability(Schedule::uniform(t0, t1), 3);
        CHECK(p.signal == doctest::Approx(q).epsilon(1e-12));
        CHECK(p.signal + p.noise == doctest::Approx(1.0));
    }
    CHECK_THROWS(signal_probability(Schedule{0.0, 1.0}, 0));
}

TEST_CASE("empirical signal probability agrees within 4 sigma") {
    const auto spec = TaskSpec::make(8, {2, 3, 7});
    const auto s = Schedule::uniform(0.0, 0.4);
    Rng rng(3, Stream::monte_carlo);
    const std::int64_t n = 200000;
    const double p = signal_probability(s, 3).signal;
    const double est = empirical_signal_probability(s, spec, n, rng);
    CHECK(std::abs(est - p) < 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("beta moments against quadrature") {
    for (auto [a, b] : {std::pair{0, 0}, {1, 3}, {4, 2}, {0, 10}, {7, 7}}) {
        for (auto [t0, t1] : {std::pair{0.0, 1.0}, {0.1, 0.35}, {0.5, 0.5}}) {
            const auto s = Schedule::uniform(t0, t1);
            const auto g = [=](double t) { return std::pow(t, a) * std::pow(1 - t, b); };
            const double expect = s.is_point_mass() ? g(t0) : gauss_legendre(g, t0, t1) / (t1 - t0);
            CHECK(uniform_beta_moment(s, a, b) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("sampling and corruption") {
    Rng rng(5, Stream::masking);
    CHECK(sample_mask(0.0, 9, rng).count() == 0);
    CHECK(sample_mask(1.0, 9, rng).count() == 9);
    CHECK_THROWS(sample_mask(1.5, 9, rng));
    const auto s = Schedule::uniform(0.2, 0.3);
    for (int i = 0; i < 100; ++i) {
        const double t = sample_rate(s, rng);
        CHECK(t >= 0.2);
        CHECK(t <= 0.3);
    }
    CHECK_THROWS(Schedule::uniform(0.5, 0.4));
    const FullSequence x{{1, -1, 1}};
    const auto c = corrupt(x, MaskVector::from_set(3, {2}));
    CHECK(c.values == std::vector<int>{1, 0, 1});
    CHECK_THROWS(corrupt(x, MaskVector::none(4)));
    CHECK(evaluation_mask(3).masked_set() == std::vector<int>{3});
}
