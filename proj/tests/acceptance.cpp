// Acceptance driver: one PASS/FAIL line per criterion. Every criterion runs
// twice with the same seed (run1/, run2/) and the last line compares the
// two output trees byte for byte.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mdlab/landscape.hpp"
#include "mdlab/objective.hpp"
#include "mdlab/report.hpp"
#include "mdlab/schedule.hpp"
#include "mdlab/textlab.hpp"
#include "mdlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace mdlab;

namespace {

// Pinned tolerances.
constexpr double kDecompositionTol = 1e-9;
constexpr double kEnergyIdentityTol = 1e-8;
constexpr double kCollapseTol = 1e-6;
constexpr double kMixedSpreadMin = 1e-3;
constexpr double kRateTol = 1e-4;
constexpr double kInverseETol = 1e-3;
constexpr double kRootTol = 1e-12;
constexpr double kClosedFormTol = 1e-9;
constexpr double kGradTol = 1e-5;
constexpr double kGapRatio = 5.0;
constexpr double kPlateauRatio = 5.0;
constexpr double kPlateauCeiling = 0.6;
constexpr double kGapThreshold = 0.9;
constexpr double kMidMargin = 0.05;

constexpr std::uint64_t kSeed = 0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double budget_seconds;
    std::function<Outcome(const fs::path&)> run;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double x) { return fmt::format("{:.3g}", x); }

// 1
Outcome decomposition(const fs::path& dir) {
    nlohmann::json log = nlohmann::json::array();
    double worst = 0.0;
    for (auto [n, k] : {std::pair{4, 2}, std::pair{6, 3}}) {
        const auto spec = TaskSpec::random(n, k, kSeed);
        const auto ds = full_cube(spec);
        for (const auto& s : {Schedule::point(0.2), Schedule::point(0.5), Schedule::uniform(0.0, 0.5)}) {
            const auto configs = enumerate_configs(ds, s);
            Rng rng(kSeed, Stream::init);
            std::vector<double> rem;
            for (int draw = 0; draw < 5; ++draw) {
                Rng r = rng.split(static_cast<std::uint64_t>(draw));
                const auto p = MlpParams::init(64, 3 * (n + 1), r);
                const auto b = effective_loss(p, configs, ds, s);
                rem.push_back(enumerated_loss(p, ds, s) - b.signal_term - b.noise_term);
            }
            const auto [lo, hi] = std::minmax_element(rem.begin(), rem.end());
            const double spread = (*hi - *lo) / std::abs(*lo);
            worst = std::max(worst, spread);
            log.push_back({{"n", n}, {"k", k}, {"t0", s.t0}, {"t1", s.t1}, {"remainders", rem}, {"spread", spread}});
        }
    }
    write_json(dir / "ac01_decomposition.json", log);
    return {worst < kDecompositionTol, fmt::format("max relative spread {} (tol {})", sci(worst), sci(kDecompositionTol))};
}

// 2
Outcome energy_identity(const fs::path& dir) {
    const auto ds = full_cube(TaskSpec::random(4, 2, kSeed));
    const auto s = Schedule::uniform(0.0, 0.5);
    const auto configs = enumerate_configs(ds, s);
    const EmbeddingSpec emb{5};
    std::vector<double> sums;
    Rng base(kSeed, Stream::init);
    for (int draw = 0; draw < 5; ++draw) {
        Rng r = base.split(static_cast<std::uint64_t>(draw));
        const auto p = MlpParams::init(256, emb.d(), r);
        const auto st = compute_stats(p.W, configs, 5);
        MlpParams fitted{p.W, st.v_star};
        const auto b = effective_loss(fitted, configs, ds, s);
        sums.push_back(b.signal_term + b.noise_term + st.energy);
    }
    const auto [lo, hi] = std::minmax_element(sums.begin(), sums.end());
    const double spread = (*hi - *lo) / std::abs(*lo);
    write_json(dir / "ac02_energy_identity.json", {{"sums", sums}, {"spread", spread}});
    return {spread < kEnergyIdentityTol, fmt::format("L_eff(v*) + E relative spread {} (tol {})", sci(spread),
                                                     sci(kEnergyIdentityTol))};
}

// 3
Outcome collapse(const fs::path& dir) {
    const auto ds = full_cube(TaskSpec::random(4, 2, kSeed));
    const auto signal = collapse_check(ds, 0.5, 512, 10, kSeed);
    write_energy_csv(dir / "ac03_energy_signal.csv", signal);
    // Matched control: same W draws at D = 128 on the signal-only set and on all masks.
    const auto matched = collapse_check(ds, 0.5, 128, 10, kSeed);
    const auto mixed = energy_scan(enumerate_configs(ds, Schedule::point(0.5)), 5, 128, 10, kSeed);
    write_energy_csv(dir / "ac03_energy_mixed.csv", mixed);
    write_json(dir / "ac03_collapse.json", {{"signal_spread", signal.relative_spread},
                                            {"signal_constant_deviation", signal.constant_deviation},
                                            {"matched_spread", matched.relative_spread},
                                            {"mixed_spread", mixed.relative_spread},
                                            {"signal_distinct", signal.distinct},
                                            {"mixed_distinct", mixed.distinct}});
    const bool ok = signal.relative_spread < kCollapseTol && signal.constant_deviation < kCollapseTol &&
                    matched.relative_spread < kCollapseTol && mixed.relative_spread > kMixedSpreadMin;
    return {ok, fmt::format("signal spread {} dev {}; D=128 signal {} vs mixed {} (need > {})",
                            sci(signal.relative_spread), sci(signal.constant_deviation),
                            sci(matched.relative_spread), sci(mixed.relative_spread), sci(kMixedSpreadMin))};
}

// 4
Outcome signal_rate(const fs::path& dir) {
    double worst = 0.0;
    nlohmann::json log = nlohmann::json::array();
    for (int k = 1; k <= 10; ++k) {
        double best = -1.0, arg = 0.0;
        for (int i = 0; i <= 100000; ++i) {
            const double t = i / 100000.0;
            const double p = signal_probability(Schedule::point(t), k).signal;
            if (p > best) best = p, arg = t;
        }
        const auto r = signal_optimal_rate(k);
        worst = std::max(worst, std::abs(r.t0 - arg));
        log.push_back({{"k", k}, {"analytic", r.t0}, {"grid", arg}});
    }
    const double p1000 = signal_optimal_rate(1000).objective_value;
    const double dev = std::abs(p1000 - std::exp(-1.0));
    write_json(dir / "ac04_signal_rate.json", {{"rates", log}, {"p_signal_k1000", p1000}});
    return {worst < kRateTol && dev < kInverseETol,
            fmt::format("max |t* - grid| {}; |P_S(k=1000) - 1/e| {}", sci(worst), sci(dev))};
}

// 5
Outcome complexity_root(const fs::path& dir) {
    double worst = 0.0;
    nlohmann::json log = nlohmann::json::array();
    for (int k = 2; k <= 12; ++k) {
        const auto r = complexity_optimal_schedule(k);
        const double y = 1.0 - r.t1;
        const double res = std::abs((2 * k + 1) * std::pow(y, k + 1) - (2 * k + 2) * std::pow(y, k) + 1);
        worst = std::max(worst, res);
        log.push_back(to_json(r));
    }
    const double y2 = (1.0 + std::sqrt(21.0)) / 10.0;
    const double d2 = std::abs(1.0 - complexity_optimal_schedule(2).t1 - y2);
    const double mean1 = moments(complexity_optimal_schedule(1).schedule(), 1).mean_t;
    write_json(dir / "ac05_complexity_root.json", {{"roots", log}, {"k1_mean", mean1}});
    return {worst < kRootTol && d2 < kClosedFormTol && std::abs(mean1 - 1.0 / 3.0) < 1e-15,
            fmt::format("max residual {}; k=2 closed-form diff {}; k=1 mean {:.15f}", sci(worst), sci(d2), mean1)};
}

// 6
Outcome sample_bound(const fs::path& dir) {
    const auto n = sample_complexity_bound(20, 1, 0.05, Schedule::point(1.0 / 3.0));
    std::vector<std::pair<double, std::int64_t>> pts;
    for (int i = 1; i < 200; ++i) {
        const auto s = Schedule::uniform(0.0, i / 200.0);
        const auto m = moments(s, 4);
        pts.emplace_back(m.mean_t * m.rho_k * m.rho_k, *sample_complexity_bound(20, 4, 0.05, s));
    }
    std::sort(pts.begin(), pts.end());
    bool monotone = true;
    for (std::size_t i = 1; i < pts.size(); ++i) monotone = monotone && pts[i].second <= pts[i - 1].second;
    write_json(dir / "ac06_sample_bound.json", {{"N_min", n ? nlohmann::json(*n) : nlohmann::json()}, {"monotone", monotone}});
    return {n == 200 && monotone, fmt::format("N_min {} (want 200), monotone {}", n ? *n : -1, monotone)};
}

// 7
Outcome interval_anchor(const fs::path& dir) {
    double best = -1.0, arg = 0.0;
    for (int i = 1; i <= 100000; ++i) {
        const double t1 = i / 100000.0;
        const double p = signal_probability(Schedule::uniform(0.0, t1), 6).signal;
        if (p > best) best = p, arg = t1;
    }
    write_json(dir / "ac07_interval_anchor.json", {{"argmax_t1", arg}, {"p_signal", best}});
    return {arg >= 0.241 && arg <= 0.251, fmt::format("argmax t1 = {:.5f} (want [0.241, 0.251])", arg)};
}

// 8
template <class P, class L>
double worst_gradient_error(P params, const P& grad, L&& loss, Rng& rng) {
    std::vector<double*> blocks;
    std::vector<const double*> gblocks;
    std::vector<Eigen::Index> sizes;
    params.for_each_block([&](auto& m) {
        blocks.push_back(m.data());
        sizes.push_back(m.size());
    });
    grad.for_each_block([&](const auto& m) { gblocks.push_back(m.data()); });
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto b = rng.below(blocks.size());
        const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(sizes[b])));
        double& x = blocks[b][j];
        const double keep = x;
        x = keep + 1e-6;
        const double up = loss(params);
        x = keep - 1e-6;
        const double down = loss(params);
        x = keep;
        const double an = gblocks[b][j];
        worst = std::max(worst, std::abs((up - down) / 2e-6 - an) / std::max(1.0, std::abs(an)));
    }
    return worst;
}

Outcome gradients(const fs::path& dir) {
    Rng rng(kSeed, Stream::init);
    const EmbeddingSpec emb{8};
    Matrix Z(emb.d(), 6);
    for (Eigen::Index i = 0; i < Z.size(); ++i) Z.data()[i] = rng.normal();
    RowVector up(6);
    for (int i = 0; i < 6; ++i) up[i] = rng.normal();
    auto mlp = MlpParams::init(32, emb.d(), rng);
    auto mfwd = mlp_forward_batch(mlp, Z);
    // Redraw until every pre-activation is clear of the kink.
    while ((mfwd.pre.array().abs() < 1e-3).any()) {
        mlp = MlpParams::init(32, emb.d(), rng);
        mfwd = mlp_forward_batch(mlp, Z);
    }
    const double e_mlp = worst_gradient_error(
        mlp, mlp_backward_batch(mlp, Z, mfwd, up),
        [&](const MlpParams& q) { return (mlp_forward_batch(q, Z).output.array() * up.array()).sum(); }, rng);

    const Matrix X = embed_sequence(CorruptedSequence{{1, 0, -1, 1, 0, 1, -1, 0}}, emb);
    Matrix tup(1, 8);
    for (int i = 0; i < 8; ++i) tup(0, i) = rng.normal();
    auto tf = TransformerParams::init(16, emb.d(), rng, std::nullopt, 1.0);
    auto cache = transformer_forward(tf, X);
    while ((cache.pre.array().abs() < 1e-3).any()) {
        tf = TransformerParams::init(16, emb.d(), rng, std::nullopt, 1.0);
        cache = transformer_forward(tf, X);
    }
    const double e_tf = worst_gradient_error(
        tf, transformer_backward(tf, X, cache, tup),
        [&](const TransformerParams& q) { return (transformer_forward(q, X).out.array() * tup.array()).sum(); }, rng);
    write_json(dir / "ac08_gradients.json", {{"mlp", e_mlp}, {"transformer", e_tf}});
    return {e_mlp < kGradTol && e_tf < kGradTol,
            fmt::format("max relative error mlp {} transformer {} (tol {})", sci(e_mlp), sci(e_tf), sci(kGradTol))};
}

// 9
Outcome grokking(const fs::path& dir) {
    TrainConfig c = preset("desk");
    c.seed = kSeed;
    c.eval_every = 10;
    c.steps = 2000;
    const auto md = train_md(c);
    write_metrics_csv(dir / "ac09_metrics_md.csv", md.metrics);
    TrainConfig cs = c;
    cs.steps = 6000;
    const auto sup = train_supervised(cs);
    write_metrics_csv(dir / "ac09_metrics_supervised.csv", sup.metrics);
    const auto g_md = grokking_gap(md.metrics, kGapThreshold);
    const auto g_sup = grokking_gap(sup.metrics, kGapThreshold);
    const auto plateau = memorization_plateau(sup.metrics, kPlateauCeiling);
    write_json(dir / "ac09_grokking.json", {{"md", run_summary(c, Objective::md, md, kGapThreshold)},
                                           {"supervised", run_summary(cs, Objective::supervised, sup, kGapThreshold)}});
    const bool gap_ok = std::isfinite(g_md.gap) && g_md.gap <= g_sup.gap / kGapRatio;
    const bool plateau_ok = std::isfinite(plateau.converge_step) && plateau.converge_step > 0 &&
                            plateau.window >= kPlateauRatio * plateau.converge_step;
    return {gap_ok && plateau_ok,
            fmt::format("gap md {} vs supervised {}; supervised memorized at step {} then val < {} for {} steps{}",
                        g_md.gap, g_sup.gap, plateau.converge_step, kPlateauCeiling, plateau.window,
                        plateau.open_ended ? " (to end of run)" : "")};
}

// 10
Outcome chance(const fs::path& dir) {
    nlohmann::json log;
    bool ok = true;
    std::string detail;
    for (Arch arch : {Arch::mlp, Arch::transformer}) {
        TrainConfig c = preset("desk");
        c.arch = arch;
        c.seed = kSeed;
        c.steps = 0;
        c.n_val = 10000;
        const double acc = train_md(c).metrics.rows.front().val_acc;
        ok = ok && acc >= 0.45 && acc <= 0.55;
        log[to_string(arch)] = acc;
        detail += fmt::format("{}{} {:.4f}", detail.empty() ? "" : ", ", to_string(arch), acc);
    }
    write_json(dir / "ac10_chance.json", log);
    return {ok, "untrained val accuracy " + detail + " (want [0.45, 0.55])"};
}

// 11
Outcome textlab(const fs::path& dir, const fs::path& corpus_path) {
    TextConfig c;
    c.seed = kSeed;
    const auto corpus = load_corpus(corpus_path, c.block_size, c.test_fraction);
    const auto report = interval_sweep(corpus, c, std::max(1u, std::thread::hardware_concurrency()));
    write_sweep_csv(dir / "ac11_interval_sweep.csv", report);
    write_json(dir / "ac11_interval_sweep.json", to_json(report));
    double mid = INFINITY;
    for (const auto& r : report.rows) {
        if (&r != &report.baseline() && r.t_lo >= 0.3 - 1e-12 && r.t_hi <= 0.7 + 1e-12) {
            mid = std::min(mid, r.final_test_loss);
        }
    }
    const double lo = report.rows.front().final_test_loss;
    const double hi = report.rows[9].final_test_loss;
    const double base = report.baseline().final_test_loss;
    const bool ok = mid <= (1 - kMidMargin) * lo && mid <= (1 - kMidMargin) * hi && lo > base && hi > base;
    return {ok, fmt::format("best mid {:.2f}, [0,0.1] {:.2f}, [0.9,1] {:.2f}, U[0,1] {:.2f}", mid, lo, hi, base)};
}

std::vector<std::string> read_tree(const fs::path& root) {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root).string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mdlab acceptance checks"};
    std::string out = "out/acceptance";
    std::string corpus = MDLAB_DEFAULT_CORPUS;
    std::vector<int> only;
    app.add_option("--out", out, "Output directory")->capture_default_str();
    app.add_option("--corpus", corpus, "Text corpus for the interval sweep")->capture_default_str();
    app.add_option("--only", only, "Run just these criteria (the determinism check then covers them)");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria{
        {1, "decomposition identity", 5, decomposition},
        {2, "energy/readout identity", 5, energy_identity},
        {3, "pure-signal collapse", 10, collapse},
        {4, "signal-optimal rate", 1, signal_rate},
        {5, "complexity-optimal root", 1, complexity_root},
        {6, "sample bound", 1, sample_bound},
        {7, "U[0,t1] anchor for k=6", 1, interval_anchor},
        {8, "gradient correctness", 5, gradients},
        {9, "grokking contrast", 600, grokking},
        {10, "chance-level start", 5, chance},
        {11, "textlab U-shape", 1200, [&](const fs::path& d) { return textlab(d, corpus); }},
    };

    const fs::path root(out);
    fs::remove_all(root);
    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        Outcome first;
        double elapsed = 0.0;
        for (const char* run : {"run1", "run2"}) {
            const auto dir = root / run;
            fs::create_directories(dir);
            const auto t0 = std::chrono::steady_clock::now();
            Outcome o;
            try {
                o = c.run(dir);
            } catch (const std::exception& e) {
                o = {false, std::string("error: ") + e.what()};
            }
            if (std::string(run) == "run1") {
                first = o;
                elapsed = seconds_since(t0);
            }
        }
        const bool in_budget = elapsed <= c.budget_seconds;
        const bool pass = first.pass && in_budget;
        failures += !pass;
        fmt::print("AC{:02d} {} {}: {}; {:.2f} s (budget {} s{})\n", c.id, pass ? "PASS" : "FAIL", c.name, first.detail,
                   elapsed, c.budget_seconds, in_budget ? "" : ", over");
        std::fflush(stdout);
    }

    const auto a = read_tree(root / "run1");
    const auto b = read_tree(root / "run2");
    std::vector<std::string> differing;
    if (a != b) {
        differing.push_back("file sets differ");
    } else {
        for (const auto& f : a) {
            if (slurp(root / "run1" / f) != slurp(root / "run2" / f)) differing.push_back(f);
        }
    }
    const bool det = differing.empty() && !a.empty();
    failures += !det;
    std::string why;
    for (const auto& f : differing) why += (why.empty() ? "" : ", ") + f;
    fmt::print("AC12 {} determinism: {} files compared across two seeded runs{}\n", det ? "PASS" : "FAIL", a.size(),
               det ? "" : "; differing: " + why);
    return failures == 0 ? 0 : 1;
}
