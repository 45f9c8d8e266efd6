#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mdlab/model.hpp"
#include "mdlab/objective.hpp"

namespace mdlab {

// Features h = relu(W z) weighted by w |M| per configuration (w as in
// MaskConfig, so w |M| = P(config) |M| / 2t):
//   c = sum_signal w |M| f* h,  Sigma = sum_all w |M| h h^T.
struct LandscapeStats {
    Vector c;
    Matrix Sigma;
    double energy = 0.0;  // c^T Sigma^+ c
    Vector v_star;        // Sigma^+ c
    int rank = 0;
};

// Moore-Penrose inverse of a symmetric PSD matrix by eigendecomposition.
// Eigenvalues below tol * lambda_max are dropped; tol defaults to 1e-10 * D.
Matrix pseudo_inverse(const Matrix& S, std::optional<double> tol = std::nullopt, int* rank = nullptr);

LandscapeStats compute_stats(const Matrix& W, const std::vector<MaskConfig>& configs, int n_prime,
                             std::optional<double> tol = std::nullopt);
LandscapeStats compute_stats(const Matrix& W, const Dataset& dataset, const Schedule& schedule,
                             std::optional<double> tol = std::nullopt);

// Configurations from `trials` Monte-Carlo draws of (x, t, M), each with
// weight 1 / (trials * 2t); empty masks are kept out since they add nothing.
std::vector<MaskConfig> sampled_configs(const Dataset& dataset, const Schedule& schedule, std::int64_t trials,
                                        Rng& rng);

// All Signal-regime masks of every sample at a fixed rate t, weighted
// uniformly: each of the T configurations gets weight 1 / (T * 2t).
std::vector<MaskConfig> signal_restricted_configs(const Dataset& dataset, double t);

// sum_signal w |M| f*^2. Equals L_eff(v*, W) + E(W); on a pure-Signal set
// it is (1/T) ||y||^2.
double energy_constant(const std::vector<MaskConfig>& configs);

// Number of distinct corrupted inputs among the configurations.
std::size_t distinct_inputs(const std::vector<MaskConfig>& configs);

struct EnergyDraw {
    int draw = 0;
    double energy = 0.0;
    int rank = 0;
};

struct CollapseReport {
    std::vector<EnergyDraw> draws;
    double theoretical_constant = 0.0;
    double relative_spread = 0.0;    // (max - min) / |mean| over draws
    double constant_deviation = 0.0; // max |E - constant| / constant
    std::size_t distinct = 0;
    bool span_ok = false;            // every draw has rank == distinct
    bool collapsed = false;          // relative_spread < 1e-6
};

inline constexpr double kCollapseSpread = 1e-6;

// Energy over `draws` random W ~ N(0, 1/d) of width D.
CollapseReport energy_scan(const std::vector<MaskConfig>& configs, int n_prime, int hidden, int draws,
                           std::uint64_t seed, std::optional<double> tol = std::nullopt);

// energy_scan on signal_restricted_configs(dataset, t).
CollapseReport collapse_check(const Dataset& dataset, double t, int hidden, int draws, std::uint64_t seed,
                              std::optional<double> tol = std::nullopt);

// CSV with header draw_index,energy,rank,theoretical_constant.
void write_energy_csv(const std::filesystem::path& path, const CollapseReport& report);

}  // namespace mdlab
