#include "mdlab/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "mdlab/report.hpp"

namespace mdlab {

Matrix pseudo_inverse(const Matrix& S, std::optional<double> tol, int* rank) {
    if (S.rows() != S.cols()) {
        throw std::invalid_argument("pseudo_inverse needs a square matrix");
    }
    const Eigen::Index D = S.rows();
    if (D == 0) {
        if (rank) *rank = 0;
        return Matrix(0, 0);
    }
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw std::invalid_argument("pseudo_inverse needs a symmetric matrix");
    }
    const double rel = tol.value_or(1e-10 * static_cast<double>(D));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
    if (eig.info() != Eigen::Success) {
        throw std::runtime_error("eigendecomposition failed");
    }
    const Vector& lambda = eig.eigenvalues();
    const double lmax = lambda.cwiseAbs().maxCoeff();
    const double cut = rel * lmax;
    Vector inv = Vector::Zero(D);
    int r = 0;
    for (Eigen::Index i = 0; i < D; ++i) {
        if (lmax > 0.0 && lambda[i] > cut) {
            inv[i] = 1.0 / lambda[i];
            ++r;
        }
    }
    if (rank) *rank = r;
    const Matrix& U = eig.eigenvectors();
    return U * inv.asDiagonal() * U.transpose();
}

LandscapeStats compute_stats(const Matrix& W, const std::vector<MaskConfig>& configs, int n_prime,
                             std::optional<double> tol) {
    const EmbeddingSpec emb{n_prime};
    if (W.cols() != emb.d()) {
        throw std::invalid_argument(fmt::format("W has {} columns, expected {}", W.cols(), emb.d()));
    }
    const Eigen::Index D = W.rows();
    const Eigen::Index T = static_cast<Eigen::Index>(configs.size());
    // H is D x T with columns sqrt(w |M|) h, so Sigma = H H^T.
    Matrix Z(emb.d(), T);
    Vector scale(T);
    LandscapeStats out;
    out.c = Vector::Zero(D);
    for (Eigen::Index i = 0; i < T; ++i) {
        const auto& cfg = configs[static_cast<std::size_t>(i)];
        Z.col(i) = aggregate(cfg.x_tilde, emb);
        scale[i] = cfg.weight * cfg.masked;
    }
    const Matrix Hraw = (W * Z).cwiseMax(0.0);
    for (Eigen::Index i = 0; i < T; ++i) {
        const auto& cfg = configs[static_cast<std::size_t>(i)];
        if (cfg.regime == Regime::signal) {
            out.c += (scale[i] * cfg.f_star) * Hraw.col(i);
        }
    }
    const Matrix H = Hraw * scale.cwiseSqrt().asDiagonal();
    out.Sigma = Matrix::Zero(D, D);
    out.Sigma.selfadjointView<Eigen::Lower>().rankUpdate(H);
    out.Sigma.triangularView<Eigen::StrictlyUpper>() = out.Sigma.transpose();
    const Matrix pinv = pseudo_inverse(out.Sigma, tol, &out.rank);
    out.v_star = pinv * out.c;
    out.energy = out.c.dot(out.v_star);
    return out;
}

LandscapeStats compute_stats(const Matrix& W, const Dataset& dataset, const Schedule& schedule,
                             std::optional<double> tol) {
    return compute_stats(W, enumerate_configs(dataset, schedule), dataset.spec.n_prime(), tol);
}

std::vector<MaskConfig> sampled_configs(const Dataset& dataset, const Schedule& schedule, std::int64_t trials,
                                        Rng& rng) {
    if (trials < 1) {
        throw std::invalid_argument("need at least one trial");
    }
    const int n_prime = dataset.spec.n_prime();
    std::vector<MaskConfig> out;
    for (std::int64_t i = 0; i < trials; ++i) {
        const std::size_t s = rng.below(dataset.size());
        const auto& x = dataset.samples[s];
        const double t = sample_rate(schedule, rng);
        const auto mask = sample_mask(t, n_prime, rng);
        const int masked = mask.count();
        if (masked == 0) {
            continue;
        }
        MaskConfig cfg;
        cfg.sample = s;
        for (int j = 0; j < n_prime; ++j) {
            if (mask.m[static_cast<std::size_t>(j)]) {
                cfg.mask_bits |= std::uint32_t{1} << std::min(j, 31);
                cfg.target_sum += x.bits[static_cast<std::size_t>(j)];
            }
        }
        cfg.x_tilde = corrupt(x, mask);
        cfg.masked = masked;
        cfg.regime = classify_regime(mask, dataset.spec);
        cfg.weight = 1.0 / (static_cast<double>(trials) * 2.0 * t);
        if (cfg.regime == Regime::signal) {
            cfg.f_star = f_star(mask, x, dataset.spec);
        }
        out.push_back(std::move(cfg));
    }
    return out;
}

std::vector<MaskConfig> signal_restricted_configs(const Dataset& dataset, double t) {
    if (!(t > 0.0 && t <= 1.0)) {
        throw std::invalid_argument(fmt::format("signal-restricted rate must lie in (0, 1], got {}", t));
    }
    const int n_prime = dataset.spec.n_prime();
    if (n_prime > kMaxEnumeratedLength) {
        throw std::invalid_argument(
            fmt::format("exact enumeration needs n' <= {}, got n' = {}", kMaxEnumeratedLength, n_prime));
    }
    std::vector<MaskConfig> out;
    const std::uint32_t mask_count = std::uint32_t{1} << n_prime;
    for (std::uint32_t bits = 1; bits < mask_count; ++bits) {
        const auto mask = MaskVector::from_bits(n_prime, bits);
        if (classify_regime(mask, dataset.spec) != Regime::signal) {
            continue;
        }
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const auto& x = dataset.samples[i];
            MaskConfig cfg;
            cfg.sample = i;
            cfg.mask_bits = bits;
            cfg.x_tilde = corrupt(x, mask);
            cfg.masked = mask.count();
            cfg.regime = Regime::signal;
            for (std::size_t j = 0; j < mask.size(); ++j) {
                if (mask.m[j]) {
                    cfg.target_sum += x.bits[j];
                }
            }
            cfg.f_star = f_star(mask, x, dataset.spec);
            out.push_back(std::move(cfg));
        }
    }
    const double w = 1.0 / (static_cast<double>(out.size()) * 2.0 * t);
    for (auto& cfg : out) {
        cfg.weight = w;
    }
    return out;
}

double energy_constant(const std::vector<MaskConfig>& configs) {
    double sum = 0.0;
    for (const auto& cfg : configs) {
        if (cfg.regime == Regime::signal) {
            sum += cfg.weight * cfg.masked * cfg.f_star * cfg.f_star;
        }
    }
    return sum;
}

std::size_t distinct_inputs(const std::vector<MaskConfig>& configs) {
    std::set<std::vector<int>> seen;
    for (const auto& cfg : configs) {
        seen.insert(cfg.x_tilde.values);
    }
    return seen.size();
}

CollapseReport energy_scan(const std::vector<MaskConfig>& configs, int n_prime, int hidden, int draws,
                           std::uint64_t seed, std::optional<double> tol) {
    if (draws < 1 || hidden < 1) {
        throw std::invalid_argument("energy scan needs draws >= 1 and width >= 1");
    }
    CollapseReport report;
    report.theoretical_constant = energy_constant(configs);
    report.distinct = distinct_inputs(configs);
    report.span_ok = true;
    const EmbeddingSpec emb{n_prime};
    const Rng base(seed, Stream::init);
    double lo = INFINITY, hi = -INFINITY, mean = 0.0;
    for (int d = 0; d < draws; ++d) {
        Rng rng = base.split(static_cast<std::uint64_t>(d));
        const auto params = MlpParams::init(hidden, emb.d(), rng);
        const auto stats = compute_stats(params.W, configs, n_prime, tol);
        report.draws.push_back({d, stats.energy, stats.rank});
        lo = std::min(lo, stats.energy);
        hi = std::max(hi, stats.energy);
        mean += stats.energy / draws;
        report.span_ok = report.span_ok && static_cast<std::size_t>(stats.rank) == report.distinct;
        if (report.theoretical_constant != 0.0) {
            report.constant_deviation =
                std::max(report.constant_deviation,
                         std::abs(stats.energy - report.theoretical_constant) / std::abs(report.theoretical_constant));
        }
    }
    report.relative_spread = mean != 0.0 ? (hi - lo) / std::abs(mean) : 0.0;
    report.collapsed = report.relative_spread < kCollapseSpread;
    return report;
}

CollapseReport collapse_check(const Dataset& dataset, double t, int hidden, int draws, std::uint64_t seed,
                              std::optional<double> tol) {
    return energy_scan(signal_restricted_configs(dataset, t), dataset.spec.n_prime(), hidden, draws, seed, tol);
}

void write_energy_csv(const std::filesystem::path& path, const CollapseReport& report) {
    CsvWriter csv(path, {"draw_index", "energy", "rank", "theoretical_constant"});
    for (const auto& d : report.draws) {
        csv.row({format_int(d.draw), format_double(d.energy), format_int(d.rank),
                 format_double(report.theoretical_constant)});
    }
}

}  // namespace mdlab
