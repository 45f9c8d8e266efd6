#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mdlab {

// An (n, k) parity instance. Secret indices are 1-based and kept sorted.
struct TaskSpec {
    int n = 0;
    int k = 0;
    std::vector<int> secret;

    // Validates 1 <= k <= n and that indices are distinct and in [1, n].
    static TaskSpec make(int n, std::vector<int> secret);
    // Draws k distinct indices uniformly from [1, n].
    static TaskSpec random(int n, int k, std::uint64_t seed);

    int n_prime() const noexcept { return n + 1; }
    // secret plus the parity position n + 1.
    std::vector<int> extended_secret() const;
    bool in_extended_secret(int position) const noexcept;
};

// The n input bits followed by their parity label. bits[j - 1] is position j.
struct FullSequence {
    std::vector<int> bits;

    int at(int position) const { return bits.at(static_cast<std::size_t>(position - 1)); }
    int label() const { return bits.back(); }
    std::size_t size() const noexcept { return bits.size(); }
};

struct Dataset {
    TaskSpec spec;
    std::vector<FullSequence> samples;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return samples.size(); }
};

// Product of x over the (1-based) secret indices.
int parity_label(std::span<const int> x, std::span<const int> secret);

FullSequence make_full_sequence(std::span<const int> x, const TaskSpec& spec);

// N i.i.d. uniform inputs, each extended with its label.
Dataset sample_dataset(const TaskSpec& spec, std::size_t count, std::uint64_t seed);

// Like sample_dataset but every input is drawn from the complement of the
// inputs present in `exclude` (used for held-out validation on small n).
Dataset sample_heldout_dataset(const TaskSpec& spec, std::size_t count, std::uint64_t seed,
                               const Dataset& exclude);

// Every x in {-1, 1}^n exactly once, in binary counting order. Requires n <= 24.
Dataset full_cube(const TaskSpec& spec);

nlohmann::json to_json(const TaskSpec& spec);
nlohmann::json to_json(const Dataset& dataset);
Dataset dataset_from_json(const nlohmann::json& j);

}  // namespace mdlab
