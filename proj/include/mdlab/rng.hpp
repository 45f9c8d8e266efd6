#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace mdlab {

// Named random streams. Every consumer of randomness derives its generator
// from (master seed, stream id), so dataset, mask and init draws never share
// a sequence and can be reproduced independently.
enum class Stream : std::uint64_t {
    dataset = 1,
    validation = 2,
    secret = 3,
    init = 4,
    masking = 5,
    evaluation = 6,
    monte_carlo = 7,
    corpus = 8,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3"). The 64-bit seed is the key; the counter is
// (block index, stream id). Satisfies UniformRandomBitGenerator.
class Philox {
public:
    using result_type = std::uint32_t;
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox(std::uint64_t seed, std::uint64_t stream = 0) noexcept;
    Philox(std::uint64_t seed, Stream stream) noexcept
        : Philox(seed, static_cast<std::uint64_t>(stream)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept;
    std::uint64_t next_u64() noexcept;

    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    // Standard normal via Box-Muller.
    double normal() noexcept;
    bool bernoulli(double p) noexcept { return uniform() < p; }
    // Uniform integer on [0, bound), bound > 0, rejection sampled.
    std::uint64_t below(std::uint64_t bound) noexcept;

    // Independent child generator; children of distinct `substream` ids never overlap.
    Philox split(std::uint64_t substream) const noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    // Raw block function, exposed for known-answer tests.
    static Block block(Block counter, std::array<std::uint32_t, 2> key) noexcept;

private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    Block buffer_{};
    int used_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

using Rng = Philox;

}  // namespace mdlab
