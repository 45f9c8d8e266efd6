#include <doctest.h>

#include <bit>
#include <set>

#include "mdlab/parity.hpp"

using namespace mdlab;

namespace {

// Oracle: parity through XOR of bit flags, -1 mapped to 1.
int xor_parity(const std::vector<int>& x, const std::vector<int>& secret) {
    unsigned acc = 0;
    for (int j : secret) acc ^= x[static_cast<std::size_t>(j - 1)] < 0 ? 1u : 0u;
    return acc ? -1 : 1;
}

}  // namespace

TEST_CASE("parity label matches xor oracle on every input") {
    const auto spec = TaskSpec::make(6, {5, 2, 3});
    CHECK(spec.secret == std::vector<int>{2, 3, 5});
    for (std::uint32_t code = 0; code < 64; ++code) {
        std::vector<int> x(6);
        for (int j = 0; j < 6; ++j) x[static_cast<std::size_t>(j)] = (code >> j) & 1u ? -1 : 1;
        CHECK(parity_label(x, spec.secret) == xor_parity(x, spec.secret));
        const auto full = make_full_sequence(x, spec);
        CHECK(full.size() == 7);
        CHECK(full.label() == xor_parity(x, spec.secret));
    }
}

TEST_CASE("task validation") {
    CHECK_THROWS(TaskSpec::make(4, {1, 1}));
    CHECK_THROWS(TaskSpec::make(4, {0}));
    CHECK_THROWS(TaskSpec::make(4, {5}));
    CHECK_THROWS(TaskSpec::random(3, 4, 0));
    const std::vector<int> bad{1, 0, 1};
    CHECK_THROWS(parity_label(bad, std::vector<int>{2}));
    CHECK_THROWS(parity_label(bad, std::vector<int>{4}));
    const auto s = TaskSpec::random(10, 4, 3);
    CHECK(s.k == 4);
    CHECK(std::set<int>(s.secret.begin(), s.secret.end()).size() == 4);
    CHECK(s.extended_secret().back() == 11);
    CHECK(s.in_extended_secret(11));
    CHECK(s.secret == TaskSpec::random(10, 4, 3).secret);
}

TEST_CASE("full cube and product identity") {
    const auto spec = TaskSpec::make(5, {1, 4});
    const auto cube = full_cube(spec);
    CHECK(cube.size() == 32);
    std::set<std::vector<int>> distinct;
    for (const auto& s : cube.samples) {
        distinct.insert(s.bits);
        // The product over the extended secret set is always +1.
        int prod = 1;
        for (int j : spec.extended_secret()) prod *= s.at(j);
        CHECK(prod == 1);
    }
    CHECK(distinct.size() == 32);
}

TEST_CASE("sampling is seeded and held-out sets are disjoint") {
    const auto spec = TaskSpec::make(8, {2, 5, 7});
    const auto a = sample_dataset(spec, 100, 9), b = sample_dataset(spec, 100, 9);
    CHECK(a.samples.size() == 100);
    for (std::size_t i = 0; i < 100; ++i) CHECK(a.samples[i].bits == b.samples[i].bits);
    const auto v = sample_heldout_dataset(spec, 200, 9, a);
    std::set<std::vector<int>> train;
    for (const auto& s : a.samples) train.insert(s.bits);
    for (const auto& s : v.samples) CHECK(train.count(s.bits) == 0);
    CHECK_THROWS(sample_heldout_dataset(TaskSpec::make(2, {1}), 5, 0, full_cube(TaskSpec::make(2, {1}))));
}

TEST_CASE("dataset json round trip") {
    const auto spec = TaskSpec::make(4, {1, 3});
    const auto d = sample_dataset(spec, 10, 5);
    const auto back = dataset_from_json(to_json(d));
    CHECK(back.spec.secret == d.spec.secret);
    CHECK(back.seed == 5);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(back.samples[i].bits == d.samples[i].bits);
    auto j = to_json(d);
    j["samples"][0][4] = -j["samples"][0][4].get<int>();
    CHECK_THROWS(dataset_from_json(j));
}
