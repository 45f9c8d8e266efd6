#include "mdlab/objective.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace mdlab {

double md_sample_loss(const ParityModel& model, const FullSequence& x, double t, const MaskVector& mask) {
    if (x.size() != mask.size()) {
        throw std::invalid_argument("sequence and mask lengths differ");
    }
    const int masked = mask.count();
    if (masked == 0) {
        return 0.0;
    }
    if (!(t > 0.0)) {
        throw std::invalid_argument(fmt::format("masking rate must be > 0 when positions are masked, got {}", t));
    }
    const auto outputs = position_outputs(model, corrupt(x, mask));
    double sum = 0.0;
    for (std::size_t j = 0; j < mask.size(); ++j) {
        if (mask.m[j]) {
            const double r = outputs[j] - x.bits[j];
            sum += r * r;
        }
    }
    return sum / (2.0 * t);
}

MonteCarloEstimate md_expected_loss(const ParityModel& model, const Dataset& dataset, const Schedule& schedule,
                                    std::int64_t trials, Rng& rng) {
    if (trials < 1) {
        throw std::invalid_argument("need at least one trial");
    }
    const int n_prime = dataset.spec.n_prime();
    double mean = 0.0;
    double m2 = 0.0;
    for (std::int64_t i = 0; i < trials; ++i) {
        const auto& x = dataset.samples[rng.below(dataset.size())];
        const double t = sample_rate(schedule, rng);
        const auto mask = sample_mask(t, n_prime, rng);
        const double loss = md_sample_loss(model, x, t, mask);
        // Welford.
        const double delta = loss - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (loss - mean);
    }
    const double var = trials > 1 ? m2 / static_cast<double>(trials - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(trials)), trials};
}

double f_star(const MaskVector& mask, const FullSequence& x, const TaskSpec& spec) {
    if (classify_regime(mask, spec) != Regime::signal) {
        throw std::domain_error("f_star is defined only for Signal-regime masks");
    }
    const int masked = mask.count();
    for (int j : spec.extended_secret()) {
        if (mask.masked(j)) {
            return static_cast<double>(x.at(j)) / masked;
        }
    }
    throw std::logic_error("signal mask without a masked secret position");
}

std::vector<MaskConfig> enumerate_configs(const Dataset& dataset, const Schedule& schedule) {
    const int n_prime = dataset.spec.n_prime();
    if (n_prime > kMaxEnumeratedLength) {
        throw std::invalid_argument(
            fmt::format("exact enumeration needs n' <= {}, got n' = {}", kMaxEnumeratedLength, n_prime));
    }
    if (dataset.size() == 0) {
        throw std::invalid_argument("cannot enumerate an empty dataset");
    }
    const auto s = Schedule::uniform(schedule.t0, schedule.t1);
    // Per |M| weight E_t[t^{|M|-1} (1-t)^{n'-|M|}] / 2, scaled by 1/N.
    std::vector<double> by_count(static_cast<std::size_t>(n_prime) + 1, 0.0);
    for (int c = 1; c <= n_prime; ++c) {
        by_count[static_cast<std::size_t>(c)] =
            0.5 * uniform_beta_moment(s, c - 1, n_prime - c) / static_cast<double>(dataset.size());
    }
    const std::uint32_t mask_count = std::uint32_t{1} << n_prime;
    std::vector<MaskConfig> out;
    for (std::uint32_t bits = 1; bits < mask_count; ++bits) {
        const auto mask = MaskVector::from_bits(n_prime, bits);
        const int masked = mask.count();
        const double w = by_count[static_cast<std::size_t>(masked)];
        if (w == 0.0) {
            continue;
        }
        const auto regime = classify_regime(mask, dataset.spec);
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const auto& x = dataset.samples[i];
            MaskConfig cfg;
            cfg.sample = i;
            cfg.mask_bits = bits;
            cfg.x_tilde = corrupt(x, mask);
            cfg.masked = masked;
            cfg.regime = regime;
            cfg.weight = w;
            for (std::size_t j = 0; j < mask.size(); ++j) {
                if (mask.m[j]) {
                    cfg.target_sum += x.bits[j];
                }
            }
            if (regime == Regime::signal) {
                cfg.f_star = f_star(mask, x, dataset.spec);
            }
            out.push_back(std::move(cfg));
        }
    }
    return out;
}

double enumerated_loss(const ParityModel& model, const Dataset& dataset, const Schedule& schedule) {
    const auto configs = enumerate_configs(dataset, schedule);
    double total = 0.0;
    for (const auto& cfg : configs) {
        const auto& x = dataset.samples[cfg.sample];
        const auto outputs = position_outputs(model, cfg.x_tilde);
        double sum = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            if ((cfg.mask_bits >> j) & 1u) {
                const double r = outputs[j] - x.bits[j];
                sum += r * r;
            }
        }
        total += cfg.weight * sum;
    }
    return total;
}

LossBreakdown effective_loss(const MlpParams& params, const Dataset& dataset, const Schedule& schedule) {
    return effective_loss(params, enumerate_configs(dataset, schedule), dataset, schedule);
}

LossBreakdown effective_loss(const MlpParams& params, const std::vector<MaskConfig>& configs, const Dataset& dataset,
                             const Schedule& schedule) {
    const EmbeddingSpec emb{dataset.spec.n_prime()};
    LossBreakdown out;
    for (const auto& cfg : configs) {
        const double f = mlp_forward(params, aggregate(cfg.x_tilde, emb)).output;
        // sum_{j in M} (f - x'_j)^2 with x'_j^2 = 1.
        out.total += cfg.weight * (cfg.masked * f * f - 2.0 * f * cfg.target_sum + cfg.masked);
        if (cfg.regime == Regime::signal) {
            const double r = f - cfg.f_star;
            out.signal_term += cfg.weight * cfg.masked * r * r;
        } else {
            out.noise_term += cfg.weight * cfg.masked * f * f;
        }
    }
    out.constant = out.total - out.signal_term - out.noise_term;
    const auto ps = signal_probability(schedule, dataset.spec.k);
    out.p_signal = ps.signal;
    out.p_noise = ps.noise;
    return out;
}

double supervised_loss(const ParityModel& model, const Dataset& dataset) {
    if (dataset.size() == 0) {
        throw std::invalid_argument("supervised loss over an empty dataset");
    }
    const int n_prime = dataset.spec.n_prime();
    const auto mask = evaluation_mask(n_prime);
    double sum = 0.0;
    for (const auto& x : dataset.samples) {
        const double r = position_output(model, corrupt(x, mask), n_prime) - x.label();
        sum += r * r;
    }
    return sum / static_cast<double>(dataset.size());
}

}  // namespace mdlab
