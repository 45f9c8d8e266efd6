#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mdlab/objective.hpp"
#include "quadrature.hpp"

using namespace mdlab;

namespace {

// E_t[g(t)] by quadrature, or g(t0) for a point mass.
double expect_t(const Schedule& s, const std::function<double(double)>& g) {
    if (s.is_point_mass()) return g(s.t0);
    return gauss_legendre(g, s.t0, s.t1) / s.width();
}

// Independent expected loss: sum over samples and masks of P(M|t)/(2t) * squared error.
double brute_loss(const ParityModel& model, const Dataset& ds, const Schedule& s) {
    const int np = ds.spec.n_prime();
    double total = 0.0;
    for (const auto& x : ds.samples) {
        for (std::uint32_t bits = 1; bits < (1u << np); ++bits) {
            const auto mask = MaskVector::from_bits(np, bits);
            const int c = mask.count();
            const double w = expect_t(s, [&](double t) { return std::pow(t, c - 1) * std::pow(1 - t, np - c) / 2; });
            const auto out = position_outputs(model, corrupt(x, mask));
            double err = 0.0;
            for (int j = 1; j <= np; ++j) {
                if (mask.masked(j)) err += (out[j - 1] - x.at(j)) * (out[j - 1] - x.at(j));
            }
            total += w * err;
        }
    }
    return total / static_cast<double>(ds.size());
}

}  // namespace

TEST_CASE("md sample loss by hand") {
    Rng rng(1, Stream::init);
    const auto spec = TaskSpec::make(3, {1, 2});
    const auto x = make_full_sequence(std::vector<int>{1, -1, 1}, spec);
    const ParityModel m = MlpParams::init(6, 12, rng);
    const auto mask = MaskVector::from_set(4, {2, 4});
    const double f = position_outputs(m, corrupt(x, mask))[0];
    const double want = ((f + 1) * (f + 1) + (f + 1) * (f + 1)) / (2 * 0.25);
    CHECK(md_sample_loss(m, x, 0.25, mask) == doctest::Approx(want).epsilon(1e-14));
    CHECK(md_sample_loss(m, x, 0.25, MaskVector::none(4)) == 0.0);
}

TEST_CASE("enumerated loss matches an independent enumeration") {
    Rng rng(2, Stream::init);
    const auto spec = TaskSpec::make(4, {2, 3});
    const auto ds = sample_dataset(spec, 6, 5);
    for (const auto& s : {Schedule::point(0.2), Schedule::point(0.5), Schedule::uniform(0, 0.5), Schedule::uniform(0.3, 0.9)}) {
        const ParityModel mlp = MlpParams::init(16, 15, rng);
        const ParityModel tf = TransformerParams::init(16, 15, rng, std::nullopt, 1.0);
        CHECK(enumerated_loss(mlp, ds, s) == doctest::Approx(brute_loss(mlp, ds, s)).epsilon(1e-11));
        CHECK(enumerated_loss(tf, ds, s) == doctest::Approx(brute_loss(tf, ds, s)).epsilon(1e-11));
    }
}

TEST_CASE("monte carlo loss agrees with enumeration") {
    Rng rng(3, Stream::init);
    const auto spec = TaskSpec::make(4, {1, 4});
    const auto ds = full_cube(spec);
    const ParityModel m = MlpParams::init(16, 15, rng);
    const auto s = Schedule::uniform(0.1, 0.6);
    Rng mc(3, Stream::monte_carlo);
    const auto est = md_expected_loss(m, ds, s, 200000, mc);
    CHECK(est.trials == 200000);
    CHECK(std::abs(est.mean - enumerated_loss(m, ds, s)) < 4 * est.std_error);
}

TEST_CASE("decomposition remainder is parameter independent on the full cube") {
    for (auto [n, secret] : {std::pair{4, std::vector<int>{1, 3}}, std::pair{6, std::vector<int>{2, 4, 5}}}) {
        const auto spec = TaskSpec::make(n, secret);
        const auto ds = full_cube(spec);
        for (const auto& s : {Schedule::point(0.2), Schedule::point(0.5), Schedule::uniform(0, 0.5)}) {
            const auto configs = enumerate_configs(ds, s);
            Rng rng(n, Stream::init);
            std::vector<double> constants;
            for (int draw = 0; draw < 5; ++draw) {
                const auto p = MlpParams::init(32, 3 * (n + 1), rng);
                const auto b = effective_loss(p, configs, ds, s);
                CHECK(b.total == doctest::Approx(enumerated_loss(p, ds, s)).epsilon(1e-12));
                constants.push_back(b.constant);
            }
            const auto [lo, hi] = std::minmax_element(constants.begin(), constants.end());
            CHECK((*hi - *lo) / std::abs(*lo) < 1e-9);
            const auto b = effective_loss(MlpParams::zeros(4, 3 * (n + 1)), configs, ds, s);
            CHECK(b.p_signal == doctest::Approx(signal_probability(s, spec.k).signal));
        }
    }
}

TEST_CASE("decomposition remainder moves on a partial dataset") {
    const auto spec = TaskSpec::make(4, {1, 3});
    const auto ds = sample_dataset(spec, 3, 9);
    const auto s = Schedule::point(0.5);
    Rng rng(4, Stream::init);
    const auto a = effective_loss(MlpParams::init(32, 15, rng), ds, s);
    const auto b = effective_loss(MlpParams::init(32, 15, rng), ds, s);
    CHECK(std::abs(a.constant - b.constant) > 1e-6);
}

TEST_CASE("f star is the secret bit over the mask size") {
    const auto spec = TaskSpec::make(4, {2, 3});
    const auto x = make_full_sequence(std::vector<int>{1, -1, 1, 1}, spec);
    CHECK(f_star(MaskVector::from_set(5, {2, 4}), x, spec) == doctest::Approx(-0.5));
    CHECK(f_star(MaskVector::from_set(5, {5}), x, spec) == doctest::Approx(-1.0));
    CHECK(f_star(MaskVector::from_set(5, {1, 3, 4}), x, spec) == doctest::Approx(1.0 / 3));
}

TEST_CASE("enumeration limits") {
    const auto spec = TaskSpec::random(16, 3, 0);
    CHECK_THROWS(enumerate_configs(sample_dataset(spec, 2, 0), Schedule::point(0.5)));
    const auto small = TaskSpec::make(3, {1});
    const auto cfgs = enumerate_configs(full_cube(small), Schedule::point(1.0));
    // t = 1 keeps only the all-masked configuration.
    CHECK(cfgs.size() == 8);
}

TEST_CASE("supervised loss is the squared label error at the eval mask") {
    Rng rng(5, Stream::init);
    const auto spec = TaskSpec::make(3, {1, 3});
    const auto ds = sample_dataset(spec, 4, 1);
    const ParityModel m = MlpParams::init(8, 12, rng);
    double want = 0.0;
    for (const auto& x : ds.samples) {
        const double f = position_output(m, corrupt(x, evaluation_mask(4)), 4);
        want += (f - x.label()) * (f - x.label());
    }
    CHECK(supervised_loss(m, ds) == doctest::Approx(want / 4).epsilon(1e-13));
}
