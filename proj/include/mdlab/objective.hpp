#pragma once

#include <cstdint>
#include <vector>

#include "mdlab/masking.hpp"
#include "mdlab/model.hpp"
#include "mdlab/parity.hpp"

namespace mdlab {

// Masked-diffusion loss split into the Signal fit, the Noise output penalty
// and a parameter-independent remainder.
struct LossBreakdown {
    double total = 0.0;
    double signal_term = 0.0;
    double noise_term = 0.0;
    double constant = 0.0;
    double p_signal = 0.0;
    double p_noise = 1.0;
};

// (1 / 2t) sum_{j in M} (f_j - x'_j)^2.
double md_sample_loss(const ParityModel& model, const FullSequence& x, double t, const MaskVector& mask);

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::int64_t trials = 0;
};

// Average of md_sample_loss over uniformly drawn samples, t ~ schedule and Bernoulli(t) masks.
MonteCarloEstimate md_expected_loss(const ParityModel& model, const Dataset& dataset, const Schedule& schedule,
                                    std::int64_t trials, Rng& rng);

// One (sample, mask) term of the exact expectation. weight is
// (1/N) E_t[t^{|M|} (1-t)^{n'-|M|} / (2t)], so the expected loss is
// sum(weight * sum_{j in M} (f_j - x'_j)^2).
struct MaskConfig {
    std::size_t sample = 0;
    std::uint32_t mask_bits = 0;
    CorruptedSequence x_tilde;
    int masked = 0;
    Regime regime = Regime::noise;
    double weight = 0.0;
    double target_sum = 0.0;  // sum of x'_j over masked j
    double f_star = 0.0;      // Signal only
};

inline constexpr int kMaxEnumeratedLength = 16;

// Every nonempty mask of every sample with nonzero weight. Requires n' <= 16.
std::vector<MaskConfig> enumerate_configs(const Dataset& dataset, const Schedule& schedule);

// Exact expected loss over the finite dataset.
double enumerated_loss(const ParityModel& model, const Dataset& dataset, const Schedule& schedule);

// x'_{j*} / |M| where {j*} = M intersected with the extended secret. Signal masks only.
double f_star(const MaskVector& mask, const FullSequence& x, const TaskSpec& spec);

// Exact decomposition of enumerated_loss for the reduced MLP. The remainder
// is parameter-independent when every input of the cube appears equally
// often in the dataset (e.g. full_cube).
LossBreakdown effective_loss(const MlpParams& params, const Dataset& dataset, const Schedule& schedule);
LossBreakdown effective_loss(const MlpParams& params, const std::vector<MaskConfig>& configs, const Dataset& dataset,
                             const Schedule& schedule);

// Mean squared error of the eval-masked prediction against the label.
double supervised_loss(const ParityModel& model, const Dataset& dataset);

}  // namespace mdlab
