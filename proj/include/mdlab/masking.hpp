#pragma once

#include <cstdint>
#include <vector>

#include "mdlab/parity.hpp"
#include "mdlab/rng.hpp"

namespace mdlab {

// Masking rate distribution t ~ U[t0, t1]; t0 == t1 is a point mass.
struct Schedule {
    double t0 = 0.0;
    double t1 = 1.0;

    static Schedule uniform(double t0, double t1);
    static Schedule point(double t) { return uniform(t, t); }

    bool is_point_mass() const noexcept { return t0 == t1; }
    double width() const noexcept { return t1 - t0; }
};

// m[j - 1] == 1 iff position j is masked.
struct MaskVector {
    std::vector<std::uint8_t> m;

    static MaskVector none(int n_prime) { return MaskVector{std::vector<std::uint8_t>(static_cast<std::size_t>(n_prime), 0)}; }
    static MaskVector from_set(int n_prime, const std::vector<int>& positions);
    // Bit j-1 of `bits` set means position j masked.
    static MaskVector from_bits(int n_prime, std::uint32_t bits);

    std::vector<int> masked_set() const;
    int count() const noexcept;
    bool masked(int position) const { return m.at(static_cast<std::size_t>(position - 1)) != 0; }
    std::size_t size() const noexcept { return m.size(); }
};

// Values in {-1, 0, +1}; 0 is the mask token.
struct CorruptedSequence {
    std::vector<int> values;

    std::size_t size() const noexcept { return values.size(); }
};

enum class Regime { signal, noise };

const char* to_string(Regime r) noexcept;

double sample_rate(const Schedule& schedule, Rng& rng);
MaskVector sample_mask(double t, int n_prime, Rng& rng);
CorruptedSequence corrupt(const FullSequence& x, const MaskVector& mask);

// Deterministic evaluation mask: only the parity position n' is hidden.
MaskVector evaluation_mask(int n_prime);

// Signal iff exactly one position of the extended secret set is masked.
Regime classify_regime(const MaskVector& mask, const TaskSpec& spec);

struct SignalProbability {
    double signal = 0.0;
    double noise = 1.0;
};

// P_S = (k + 1) E_t[t (1 - t)^k] in closed form; P_N = 1 - P_S.
SignalProbability signal_probability(const Schedule& schedule, int k);

// Monte-Carlo fraction of (t, m) draws that land in the Signal regime.
double empirical_signal_probability(const Schedule& schedule, const TaskSpec& spec, std::int64_t trials, Rng& rng);

// E_{t ~ schedule}[t^a (1 - t)^b], exact (polynomial antiderivative).
double uniform_beta_moment(const Schedule& schedule, int a, int b);

}  // namespace mdlab
