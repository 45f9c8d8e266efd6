#include "mdlab/parity.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include <fmt/format.h>

#include "mdlab/rng.hpp"

namespace mdlab {

namespace {

std::uint64_t encode_bits(std::span<const int> x) {
    std::uint64_t key = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0) {
            key |= std::uint64_t{1} << i;
        }
    }
    return key;
}

std::vector<int> random_input(int n, Rng& rng) {
    std::vector<int> x(static_cast<std::size_t>(n));
    for (auto& b : x) {
        b = (rng() & 1u) ? 1 : -1;
    }
    return x;
}

}  // namespace

TaskSpec TaskSpec::make(int n, std::vector<int> secret) {
    if (n < 1) {
        throw std::invalid_argument(fmt::format("parity task needs n >= 1, got {}", n));
    }
    std::sort(secret.begin(), secret.end());
    const int k = static_cast<int>(secret.size());
    if (k < 1 || k > n) {
        throw std::invalid_argument(fmt::format("secret size k={} must satisfy 1 <= k <= n={}", k, n));
    }
    if (std::adjacent_find(secret.begin(), secret.end()) != secret.end()) {
        throw std::invalid_argument("secret indices must be distinct");
    }
    if (secret.front() < 1 || secret.back() > n) {
        throw std::invalid_argument(fmt::format("secret indices must lie in [1, {}]", n));
    }
    return TaskSpec{n, k, std::move(secret)};
}

TaskSpec TaskSpec::random(int n, int k, std::uint64_t seed) {
    if (k < 1 || k > n) {
        throw std::invalid_argument(fmt::format("secret size k={} must satisfy 1 <= k <= n={}", k, n));
    }
    Rng rng(seed, Stream::secret);
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 1);
    // Partial Fisher-Yates.
    for (int i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(n - i));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return make(n, std::move(pool));
}

std::vector<int> TaskSpec::extended_secret() const {
    auto out = secret;
    out.push_back(n + 1);
    return out;
}

bool TaskSpec::in_extended_secret(int position) const noexcept {
    return position == n + 1 || std::binary_search(secret.begin(), secret.end(), position);
}

int parity_label(std::span<const int> x, std::span<const int> secret) {
    int y = 1;
    for (int j : secret) {
        if (j < 1 || static_cast<std::size_t>(j) > x.size()) {
            throw std::out_of_range(fmt::format("secret index {} outside [1, {}]", j, x.size()));
        }
        const int b = x[static_cast<std::size_t>(j - 1)];
        if (b != 1 && b != -1) {
            throw std::invalid_argument(fmt::format("parity input must be +-1, got {} at {}", b, j));
        }
        y *= b;
    }
    return y;
}

FullSequence make_full_sequence(std::span<const int> x, const TaskSpec& spec) {
    if (static_cast<int>(x.size()) != spec.n) {
        throw std::invalid_argument(fmt::format("input has length {}, task expects n={}", x.size(), spec.n));
    }
    FullSequence seq;
    seq.bits.reserve(x.size() + 1);
    seq.bits.assign(x.begin(), x.end());
    seq.bits.push_back(parity_label(x, spec.secret));
    return seq;
}

Dataset sample_dataset(const TaskSpec& spec, std::size_t count, std::uint64_t seed) {
    if (count < 1) {
        throw std::invalid_argument("dataset size must be >= 1");
    }
    Rng rng(seed, Stream::dataset);
    Dataset ds{spec, {}, seed};
    ds.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto x = random_input(spec.n, rng);
        ds.samples.push_back(make_full_sequence(x, spec));
    }
    return ds;
}

Dataset sample_heldout_dataset(const TaskSpec& spec, std::size_t count, std::uint64_t seed,
                               const Dataset& exclude) {
    if (count < 1) {
        throw std::invalid_argument("dataset size must be >= 1");
    }
    if (spec.n > 62) {
        throw std::invalid_argument("held-out sampling supports n <= 62");
    }
    std::unordered_set<std::uint64_t> seen;
    for (const auto& s : exclude.samples) {
        seen.insert(encode_bits(std::span<const int>(s.bits).first(static_cast<std::size_t>(spec.n))));
    }
    if (spec.n < 63 && seen.size() >= (std::uint64_t{1} << spec.n)) {
        throw std::invalid_argument("excluded set covers every input; nothing left to hold out");
    }
    Rng rng(seed, Stream::validation);
    Dataset ds{spec, {}, seed};
    ds.samples.reserve(count);
    while (ds.samples.size() < count) {
        const auto x = random_input(spec.n, rng);
        if (seen.contains(encode_bits(x))) {
            continue;
        }
        ds.samples.push_back(make_full_sequence(x, spec));
    }
    return ds;
}

Dataset full_cube(const TaskSpec& spec) {
    if (spec.n > 24) {
        throw std::invalid_argument(fmt::format("full cube enumeration needs n <= 24, got {}", spec.n));
    }
    Dataset ds{spec, {}, 0};
    const std::uint64_t total = std::uint64_t{1} << spec.n;
    ds.samples.reserve(total);
    std::vector<int> x(static_cast<std::size_t>(spec.n));
    for (std::uint64_t code = 0; code < total; ++code) {
        for (int i = 0; i < spec.n; ++i) {
            x[static_cast<std::size_t>(i)] = ((code >> i) & 1u) ? 1 : -1;
        }
        ds.samples.push_back(make_full_sequence(x, spec));
    }
    return ds;
}

nlohmann::json to_json(const TaskSpec& spec) {
    return {{"n", spec.n}, {"k", spec.k}, {"secret", spec.secret}};
}

nlohmann::json to_json(const Dataset& dataset) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : dataset.samples) {
        samples.push_back(s.bits);
    }
    return {{"n", dataset.spec.n},
            {"k", dataset.spec.k},
            {"secret", dataset.spec.secret},
            {"seed", dataset.seed},
            {"samples", std::move(samples)}};
}

Dataset dataset_from_json(const nlohmann::json& j) {
    auto spec = TaskSpec::make(j.at("n").get<int>(), j.at("secret").get<std::vector<int>>());
    if (j.at("k").get<int>() != spec.k) {
        throw std::invalid_argument("dataset JSON: k does not match secret size");
    }
    Dataset ds{spec, {}, j.at("seed").get<std::uint64_t>()};
    for (const auto& row : j.at("samples")) {
        auto bits = row.get<std::vector<int>>();
        if (static_cast<int>(bits.size()) != spec.n_prime()) {
            throw std::invalid_argument("dataset JSON: sample length differs from n + 1");
        }
        auto seq = make_full_sequence(std::span<const int>(bits).first(static_cast<std::size_t>(spec.n)), spec);
        if (seq.bits.back() != bits.back()) {
            throw std::invalid_argument("dataset JSON: stored parity bit is inconsistent with the secret");
        }
        ds.samples.push_back(std::move(seq));
    }
    return ds;
}

}  // namespace mdlab
