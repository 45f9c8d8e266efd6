// mdlab: command-line driver for the parity and text experiments.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
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

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

// Flags shared by every command.
struct Common {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string config;
    bool timing = false;
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_out) {
    c.out = default_out;
    cmd->add_option("--seed", c.seed, "Master seed (fallback: MDLAB_SEED, then 0)");
    cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
    cmd->add_option("--config", c.config, "JSON config file (flags take precedence)");
    cmd->add_flag("--timing", c.timing, "Record wall-clock seconds in the manifest");
}

nlohmann::json load_config(const Common& c) {
    if (c.config.empty()) {
        return nlohmann::json::object();
    }
    try {
        auto j = read_json(c.config);
        if (!j.is_object()) {
            throw UsageError("config file must hold a JSON object");
        }
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(fmt::format("cannot parse config {}: {}", c.config, e.what()));
    }
}

std::uint64_t env_seed() {
    if (const char* s = std::getenv("MDLAB_SEED")) {
        try {
            return std::stoull(s);
        } catch (const std::exception&) {
            throw UsageError(fmt::format("MDLAB_SEED='{}' is not an unsigned integer", s));
        }
    }
    return 0;
}

// flags > config file > env fallback.
std::uint64_t resolve_seed(const Common& c, const nlohmann::json& file) {
    if (c.seed) return *c.seed;
    if (file.contains("seed")) return file["seed"].get<std::uint64_t>();
    return env_seed();
}

template <class T>
T pick(const std::optional<T>& flag, const nlohmann::json& file, const char* key, T fallback) {
    if (flag) return *flag;
    if (file.contains(key)) return file[key].get<T>();
    return fallback;
}

class Outputs {
public:
    Outputs(std::string command, const Common& common)
        : common_(common), start_(Clock::now()) {
        manifest_.command = std::move(command);
        dir_ = common.out;
        fs::create_directories(dir_);
    }

    fs::path path(const std::string& name) {
        manifest_.outputs.push_back(name);
        return dir_ / name;
    }

    void finish(const nlohmann::json& config, std::uint64_t seed) {
        manifest_.config = config;
        manifest_.seed = seed;
        if (common_.timing) {
            manifest_.wall_clock_seconds = std::chrono::duration<double>(Clock::now() - start_).count();
        }
        write_json(dir_ / "manifest.json", manifest_.to_json());
    }

private:
    const Common& common_;
    Clock::time_point start_;
    fs::path dir_;
    RunManifest manifest_;
};

// ---- parity-train ---------------------------------------------------------

struct TrainFlags {
    Common common;
    std::string preset = "desk";
    std::string objective = "md";
    std::optional<std::string> arch, optimizer;
    std::optional<int> n, k, hidden;
    std::optional<std::uint64_t> secret_seed;
    std::optional<std::size_t> n_train, supervised_n_train, n_val;
    std::optional<double> t0, t1, lr, weight_decay;
    std::optional<std::int64_t> steps, eval_every;
    std::optional<bool> heldout;
    double threshold = 0.9;
    bool checkpoint = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--preset", f.preset, "Preset: desk | full-20-6 | none")->capture_default_str();
    cmd->add_option("--arch", f.arch, "mlp | transformer");
    cmd->add_option("--n", f.n, "Input bits");
    cmd->add_option("--k", f.k, "Secret size");
    cmd->add_option("--secret-seed", f.secret_seed, "Seed for the secret set");
    cmd->add_option("--n-train", f.n_train, "Training samples");
    cmd->add_option("--supervised-n-train", f.supervised_n_train, "Training samples for the supervised arm (0: n-train)");
    cmd->add_option("--n-val", f.n_val, "Validation samples");
    cmd->add_option("--heldout", f.heldout, "Draw validation inputs disjoint from training (true|false)");
    cmd->add_option("--t0", f.t0, "Masking schedule lower end");
    cmd->add_option("--t1", f.t1, "Masking schedule upper end");
    cmd->add_option("--optimizer", f.optimizer, "gd | adamw");
    cmd->add_option("--lr", f.lr, "Step size");
    cmd->add_option("--weight-decay", f.weight_decay, "Decoupled weight decay");
    cmd->add_option("--steps", f.steps, "Training steps");
    cmd->add_option("--eval-every", f.eval_every, "Evaluation interval");
    cmd->add_option("--hidden", f.hidden, "Hidden width D");
    cmd->add_option("--threshold", f.threshold, "Accuracy threshold for the grokking gap")->capture_default_str();
}

TrainConfig build_train_config(const TrainFlags& f, std::uint64_t* seed_out) {
    try {
        TrainConfig c = f.preset == "none" ? TrainConfig{} : preset(f.preset);
        auto file = load_config(f.common);
        const auto seed = resolve_seed(f.common, file);
        c = config_from_json(file, c);
        c.seed = seed;
        if (f.arch) c.arch = parse_arch(*f.arch);
        if (f.optimizer) c.optimizer = parse_optimizer(*f.optimizer);
        if (f.n) c.n = *f.n;
        if (f.k) c.k = *f.k;
        if (f.hidden) c.hidden = *f.hidden;
        if (f.secret_seed) c.secret_seed = *f.secret_seed;
        if (f.n_train) c.n_train = *f.n_train;
        if (f.supervised_n_train) c.supervised_n_train = *f.supervised_n_train;
        if (f.n_val) c.n_val = *f.n_val;
        if (f.heldout) c.heldout_validation = *f.heldout;
        if (f.t0) c.schedule.t0 = *f.t0;
        if (f.t1) c.schedule.t1 = *f.t1;
        if (f.lr) c.lr = *f.lr;
        if (f.weight_decay) c.weight_decay = *f.weight_decay;
        if (f.steps) c.steps = *f.steps;
        if (f.eval_every) c.eval_every = *f.eval_every;
        c.validate();
        if (seed_out) *seed_out = seed;
        return c;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

int cmd_parity_train(const TrainFlags& f) {
    if (f.objective != "md" && f.objective != "supervised" && f.objective != "both") {
        throw UsageError(fmt::format("--objective must be md, supervised or both, got '{}'", f.objective));
    }
    std::uint64_t seed = 0;
    const auto config = build_train_config(f, &seed);
    Outputs out("parity-train", f.common);
    std::vector<Objective> objectives;
    if (f.objective != "supervised") objectives.push_back(Objective::md);
    if (f.objective != "md") objectives.push_back(Objective::supervised);
    nlohmann::json gaps;
    for (auto obj : objectives) {
        const std::string name = to_string(obj);
        const auto result = train(config, obj);
        write_metrics_csv(out.path(fmt::format("metrics_{}.csv", name)), result.metrics);
        const auto summary = run_summary(config, obj, result, f.threshold);
        write_json(out.path(fmt::format("summary_{}.json", name)), summary);
        if (f.checkpoint) {
            save_checkpoint_binary(out.path(fmt::format("model_{}.bin", name)), result.model, config.n + 1);
        }
        gaps[name] = summary["grokking_gap"];
        const auto& last = result.metrics.rows.back();
        fmt::print("{}: step {} train_acc {:.4f} val_acc {:.4f} gap {}\n", name, last.step, last.train_acc,
                   last.val_acc, format_double(summary["grokking_gap"]["gap"].is_null()
                                                   ? INFINITY
                                                   : summary["grokking_gap"]["gap"].get<double>()));
    }
    if (objectives.size() == 2) {
        const auto gap = [&](const char* k) {
            const auto& g = gaps[k]["gap"];
            return g.is_null() ? INFINITY : g.get<double>();
        };
        const double md = gap("md"), sup = gap("supervised");
        nlohmann::json cmp{{"threshold", f.threshold}, {"md", gaps["md"]}, {"supervised", gaps["supervised"]}};
        cmp["ratio_supervised_over_md"] = md > 0 ? sup / md : (sup > 0 ? INFINITY : 1.0);
        cmp["md_gap_at_most_fifth"] = md <= sup / 5.0;
        write_json(out.path("gap_comparison.json"), cmp);
    }
    out.finish(to_json(config), seed);
    return 0;
}

// ---- decompose-check ------------------------------------------------------

struct DecomposeFlags {
    Common common;
    std::optional<int> n, k, draws, hidden;
    std::vector<std::string> schedules;
};

Schedule parse_range(const std::string& s) {
    const auto colon = s.find(':');
    try {
        if (colon == std::string::npos) {
            return Schedule::point(std::stod(s));
        }
        return Schedule::uniform(std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1)));
    } catch (const std::invalid_argument& e) {
        throw UsageError(fmt::format("bad schedule '{}': expected t or t0:t1 ({})", s, e.what()));
    }
}

int cmd_decompose_check(const DecomposeFlags& f) {
    const auto file = load_config(f.common);
    const auto seed = resolve_seed(f.common, file);
    const int n = pick(f.n, file, "n", 4);
    const int k = pick(f.k, file, "k", 2);
    const int draws = pick(f.draws, file, "draws", 5);
    const int hidden = pick(f.hidden, file, "hidden", 32);
    auto names = f.schedules;
    if (names.empty()) {
        names = file.contains("schedules") ? file["schedules"].get<std::vector<std::string>>()
                                           : std::vector<std::string>{"0.2", "0.5", "0:0.5"};
    }
    if (n + 1 > kMaxEnumeratedLength) {
        std::cerr << fmt::format("decompose-check: n = {} is infeasible, exact enumeration needs n + 1 <= {}\n", n,
                                 kMaxEnumeratedLength);
        return 1;
    }
    if (k < 1 || k > n || draws < 2 || hidden < 1) {
        throw UsageError("need 1 <= k <= n, draws >= 2, hidden >= 1");
    }
    const auto task = TaskSpec::random(n, k, seed);
    const auto data = full_cube(task);
    const EmbeddingSpec emb{task.n_prime()};
    nlohmann::json rows = nlohmann::json::array();
    double worst = 0.0;
    for (const auto& name : names) {
        const auto schedule = parse_range(name);
        const auto configs = enumerate_configs(data, schedule);
        std::vector<double> consts;
        const Rng base(seed, Stream::init);
        for (int r = 0; r < draws; ++r) {
            Rng rng = base.split(static_cast<std::uint64_t>(r));
            const auto params = MlpParams::init(hidden, emb.d(), rng);
            const auto b = effective_loss(params, configs, data, schedule);
            const double total = enumerated_loss(ParityModel{params}, data, schedule);
            consts.push_back(total - b.signal_term - b.noise_term);
        }
        const auto [lo, hi] = std::minmax_element(consts.begin(), consts.end());
        double mean = 0.0;
        for (double c : consts) mean += c / draws;
        const double dev = (*hi - *lo) / std::max(std::abs(mean), 1e-300);
        worst = std::max(worst, dev);
        rows.push_back({{"t0", schedule.t0}, {"t1", schedule.t1}, {"constants", consts}, {"relative_deviation", dev}});
    }
    nlohmann::json report{{"n", n}, {"k", k}, {"secret", task.secret}, {"draws", draws}, {"hidden", hidden},
                          {"schedules", rows}, {"max_relative_deviation", worst}};
    std::cout << dump_json(report) << '\n';
    fmt::print("max constant deviation {}\n", format_double(worst));
    if (!f.common.config.empty() || f.common.out != "out/decompose-check") {
        Outputs out("decompose-check", f.common);
        write_json(out.path("decompose.json"), report);
        out.finish({{"n", n}, {"k", k}, {"draws", draws}, {"hidden", hidden}, {"schedules", names}}, seed);
    }
    return 0;
}

// ---- schedule-opt ---------------------------------------------------------

struct ScheduleFlags {
    Common common;
    std::optional<int> k, n;
    std::optional<double> delta;
};

int cmd_schedule_opt(const ScheduleFlags& f) {
    const auto file = load_config(f.common);
    const int k = pick(f.k, file, "k", 6);
    std::optional<int> n = f.n;
    if (!n && file.contains("n")) n = file["n"].get<int>();
    const double delta = pick(f.delta, file, "delta", 0.05);
    if (k < 1) throw UsageError("k must be >= 1");
    if (n && *n < 1) throw UsageError("n must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw UsageError("delta must lie in (0, 1)");
    const auto sig = signal_optimal_rate(k);
    const auto cpx = complexity_optimal_schedule(k);
    auto bound = [&](const OptimalScheduleResult& r) -> std::optional<std::int64_t> {
        if (!n) return std::nullopt;
        return sample_complexity_bound(*n, k, delta, r.schedule());
    };
    nlohmann::json sj = to_json(sig, bound(sig));
    nlohmann::json cj = to_json(cpx, bound(cpx));
    sj["p_signal"] = signal_probability(sig.schedule(), k).signal;
    cj["p_signal"] = signal_probability(cpx.schedule(), k).signal;
    const auto m = moments(cpx.schedule(), k);
    cj["mean_t"] = m.mean_t;
    cj["rho_k"] = m.rho_k;
    if (k == 1) {
        cj["family"] = "any uniform schedule with mean_t = 1/3";
    }
    nlohmann::json report{{"k", k}, {"signal_optimal", sj}, {"complexity_optimal", cj}};
    if (n) {
        report["n"] = *n;
        report["delta"] = delta;
    }
    std::cout << dump_json(report) << '\n';
    if (!f.common.config.empty() || f.common.out != "out/schedule-opt") {
        Outputs out("schedule-opt", f.common);
        write_json(out.path("schedule.json"), report);
        out.finish({{"k", k}, {"n", n ? nlohmann::json(*n) : nlohmann::json()}, {"delta", delta}}, 0);
    }
    return 0;
}

// ---- energy-scan ----------------------------------------------------------

struct EnergyFlags {
    Common common;
    std::optional<int> n, k, hidden, draws;
    std::optional<double> t;
    std::string mode = "signal";
};

int cmd_energy_scan(const EnergyFlags& f) {
    const auto file = load_config(f.common);
    const auto seed = resolve_seed(f.common, file);
    const int n = pick(f.n, file, "n", 4);
    const int k = pick(f.k, file, "k", 2);
    const int hidden = pick(f.hidden, file, "hidden", 512);
    const int draws = pick(f.draws, file, "draws", 10);
    const double t = pick(f.t, file, "t", 0.3);
    const std::string mode = file.contains("mode") && f.mode == "signal" ? file["mode"].get<std::string>() : f.mode;
    if (mode != "signal" && mode != "mixed") throw UsageError("--mode must be signal or mixed");
    if (n + 1 > kMaxEnumeratedLength) {
        std::cerr << fmt::format("energy-scan: n = {} is infeasible, exact enumeration needs n + 1 <= {}\n", n,
                                 kMaxEnumeratedLength);
        return 1;
    }
    if (k < 1 || k > n || draws < 1 || hidden < 1 || !(t > 0.0 && t <= 1.0)) {
        throw UsageError("need 1 <= k <= n, draws >= 1, hidden >= 1, 0 < t <= 1");
    }
    const auto task = TaskSpec::random(n, k, seed);
    const auto data = full_cube(task);
    const auto configs =
        mode == "signal" ? signal_restricted_configs(data, t) : enumerate_configs(data, Schedule::point(t));
    const auto report = energy_scan(configs, task.n_prime(), hidden, draws, seed);
    Outputs out("energy-scan", f.common);
    write_energy_csv(out.path("energy.csv"), report);
    nlohmann::json summary{{"mode", mode},
                           {"configurations", configs.size()},
                           {"distinct_inputs", report.distinct},
                           {"span_ok", report.span_ok},
                           {"relative_spread", report.relative_spread},
                           {"theoretical_constant", report.theoretical_constant},
                           {"constant_deviation", report.constant_deviation},
                           {"collapsed", report.collapsed}};
    write_json(out.path("energy_summary.json"), summary);
    out.finish({{"n", n}, {"k", k}, {"hidden", hidden}, {"draws", draws}, {"t", t}, {"mode", mode}}, seed);
    fmt::print("{}: spread {} constant {} collapsed {}\n", mode, format_double(report.relative_spread),
               format_double(report.theoretical_constant), report.collapsed);
    return 0;
}

// ---- textlab --------------------------------------------------------------

struct TextFlags {
    Common common;
    std::string corpus;
    bool sweep = false;
    unsigned workers = 0;
    std::optional<int> block_size, hidden, batch;
    std::optional<std::int64_t> steps, eval_trials;
    std::optional<double> lr, weight_decay, t_lo, t_hi;
};

TextConfig build_text_config(const TextFlags& f, std::uint64_t* seed_out) {
    try {
        const auto file = load_config(f.common);
        auto c = text_config_from_json(file.contains("corpus") ? [&] {
            auto j = file;
            j.erase("corpus");
            return j;
        }() : file);
        c.seed = resolve_seed(f.common, file);
        if (f.block_size) c.block_size = *f.block_size;
        if (f.hidden) c.hidden = *f.hidden;
        if (f.batch) c.batch = *f.batch;
        if (f.steps) c.steps = *f.steps;
        if (f.eval_trials) c.eval_trials = *f.eval_trials;
        if (f.lr) c.lr = *f.lr;
        if (f.weight_decay) c.weight_decay = *f.weight_decay;
        if (f.t_lo) c.t_lo = *f.t_lo;
        if (f.t_hi) c.t_hi = *f.t_hi;
        c.validate();
        *seed_out = c.seed;
        return c;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

int cmd_textlab(const TextFlags& f) {
    std::uint64_t seed = 0;
    const auto config = build_text_config(f, &seed);
    const auto file = load_config(f.common);
    std::string corpus_path = f.corpus;
    if (corpus_path.empty()) {
        corpus_path = file.contains("corpus") ? file["corpus"].get<std::string>() : std::string(MDLAB_DEFAULT_CORPUS);
    }
    const auto corpus = load_corpus(corpus_path, config.block_size, config.test_fraction);
    Outputs out("textlab", f.common);
    auto cfg_json = to_json(config);
    cfg_json["corpus"] = fs::path(corpus_path).filename().string();
    if (f.sweep) {
        const unsigned workers = f.workers ? f.workers : std::max(1u, std::thread::hardware_concurrency());
        const auto report = interval_sweep(corpus, config, workers);
        write_sweep_csv(out.path("interval_sweep.csv"), report);
        write_json(out.path("interval_sweep.json"), to_json(report));
        for (const auto& r : report.rows) {
            fmt::print("[{:.1f}, {:.1f}] {:.6f} +- {:.6f}{}\n", r.t_lo, r.t_hi, r.final_test_loss, r.std_error,
                       r.diverged ? " diverged" : "");
        }
    } else {
        const auto run = train_text(corpus, config);
        Rng eval_rng(config.seed, Stream::evaluation);
        const auto est = full_range_test_loss(run.params, corpus, config.eval_trials, eval_rng);
        {
            CsvWriter csv(out.path("train_loss.csv"), {"step", "train_loss"});
            for (std::size_t i = 0; i < run.train_loss.size(); ++i) {
                csv.row({format_int(static_cast<long long>(i + 1)), format_double(run.train_loss[i])});
            }
        }
        write_json(out.path("textlab_summary.json"), {{"t_lo", config.t_lo},
                                                      {"t_hi", config.t_hi},
                                                      {"final_test_loss", est.mean},
                                                      {"std_error", est.std_error},
                                                      {"diverged", run.diverged}});
        fmt::print("[{}, {}] test loss {:.6f} +- {:.6f}\n", config.t_lo, config.t_hi, est.mean, est.std_error);
    }
    out.finish(cfg_json, seed);
    return 0;
}

// ---- sweep ----------------------------------------------------------------

struct SweepFlags {
    TrainFlags train;
    std::string ranges = "0:0.1,0:0.2,0:0.3,0:0.4";
    unsigned workers = 0;
};

int cmd_sweep(const SweepFlags& f) {
    std::uint64_t seed = 0;
    const auto base = build_train_config(f.train, &seed);
    std::vector<Schedule> schedules;
    std::vector<std::string> names;
    std::string rest = f.ranges;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        names.push_back(rest.substr(0, comma));
        schedules.push_back(parse_range(names.back()));
        rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    }
    if (schedules.empty()) throw UsageError("--ranges is empty");
    Outputs out("sweep", f.train.common);
    std::vector<TrainResult> results(schedules.size());
    std::vector<std::string> errors(schedules.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < schedules.size(); i = next++) {
            TrainConfig c = base;
            c.schedule = schedules[i];
            try {
                results[i] = train_md(c);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const unsigned workers = f.workers ? f.workers : std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < std::min<std::size_t>(workers, schedules.size()); ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    CsvWriter csv(out.path("sweep.csv"), {"t0", "t1", "step_train", "step_val", "final_train_acc", "final_val_acc"});
    for (std::size_t i = 0; i < schedules.size(); ++i) {
        const auto& s = schedules[i];
        if (!errors[i].empty()) {
            fmt::print(stderr, "{}: {}\n", names[i], errors[i]);
            csv.row({format_double(s.t0), format_double(s.t1), "nan", "nan", "nan", "nan"});
            continue;
        }
        const auto gap = grokking_gap(results[i].metrics, f.train.threshold);
        const auto& last = results[i].metrics.rows.back();
        csv.row({format_double(s.t0), format_double(s.t1), format_double(gap.step_train), format_double(gap.step_val),
                 format_double(last.train_acc), format_double(last.val_acc)});
        write_metrics_csv(out.path(fmt::format("metrics_{}_{}.csv", format_double(s.t0), format_double(s.t1))),
                          results[i].metrics);
        fmt::print("U[{}, {}]: train crosses {} at {}, val at {}\n", s.t0, s.t1, f.train.threshold,
                   format_double(gap.step_train), format_double(gap.step_val));
    }
    auto cfg = to_json(base);
    cfg["ranges"] = f.ranges;
    cfg["threshold"] = f.train.threshold;
    out.finish(cfg, seed);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Masked-diffusion parity and text laboratory"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    TrainFlags train;
    auto* c_train = app.add_subcommand("parity-train", "Train on parity with the MD and/or supervised objective");
    add_common(c_train, train.common, "out/parity-train");
    add_train_flags(c_train, train);
    c_train->add_option("--objective", train.objective, "md | supervised | both")->capture_default_str();
    c_train->add_flag("--checkpoint", train.checkpoint, "Write binary checkpoints of the final models");

    DecomposeFlags dec;
    auto* c_dec = app.add_subcommand("decompose-check", "Check that the loss remainder is parameter-independent");
    add_common(c_dec, dec.common, "out/decompose-check");
    c_dec->add_option("--n", dec.n, "Input bits (n + 1 <= 16)");
    c_dec->add_option("--k", dec.k, "Secret size");
    c_dec->add_option("--draws", dec.draws, "Random parameter draws R");
    c_dec->add_option("--hidden", dec.hidden, "Hidden width");
    c_dec->add_option("--schedule", dec.schedules, "Schedules as t or t0:t1 (repeatable)");

    ScheduleFlags sch;
    auto* c_sch = app.add_subcommand("schedule-opt", "Optimal masking schedules and the sample bound");
    add_common(c_sch, sch.common, "out/schedule-opt");
    c_sch->add_option("--k", sch.k, "Secret size");
    c_sch->add_option("--n", sch.n, "Input bits, enables N_min");
    c_sch->add_option("--delta", sch.delta, "Failure probability for N_min");

    EnergyFlags en;
    auto* c_en = app.add_subcommand("energy-scan", "Energy of random features on an enumerable instance");
    add_common(c_en, en.common, "out/energy-scan");
    c_en->add_option("--n", en.n, "Input bits");
    c_en->add_option("--k", en.k, "Secret size");
    c_en->add_option("--hidden", en.hidden, "Hidden width D");
    c_en->add_option("--draws", en.draws, "Random W draws");
    c_en->add_option("--t", en.t, "Point-mass masking rate");
    c_en->add_option("--mode", en.mode, "signal | mixed")->capture_default_str();

    TextFlags tx;
    auto* c_tx = app.add_subcommand("textlab", "Interval-restricted character MD language model");
    add_common(c_tx, tx.common, "out/textlab");
    c_tx->add_option("--corpus", tx.corpus, "Plain-text corpus (default: bundled)");
    c_tx->add_flag("--sweep", tx.sweep, "Run the ten-interval sweep plus the U[0,1] baseline");
    c_tx->add_option("--workers", tx.workers, "Concurrent runs (default: logical cores)");
    c_tx->add_option("--block-size", tx.block_size, "Context length");
    c_tx->add_option("--hidden", tx.hidden, "Hidden width D");
    c_tx->add_option("--batch", tx.batch, "Sequences per step");
    c_tx->add_option("--steps", tx.steps, "Training steps");
    c_tx->add_option("--eval-trials", tx.eval_trials, "Monte-Carlo test draws");
    c_tx->add_option("--lr", tx.lr, "AdamW step size");
    c_tx->add_option("--weight-decay", tx.weight_decay, "Decoupled weight decay");
    c_tx->add_option("--t-lo", tx.t_lo, "Training interval lower end");
    c_tx->add_option("--t-hi", tx.t_hi, "Training interval upper end");

    SweepFlags sw;
    auto* c_sw = app.add_subcommand("sweep", "MD training over a grid of schedules");
    add_common(c_sw, sw.train.common, "out/sweep");
    add_train_flags(c_sw, sw.train);
    c_sw->add_option("--ranges", sw.ranges, "Comma list of t0:t1")->capture_default_str();
    c_sw->add_option("--workers", sw.workers, "Concurrent runs (default: logical cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        if (*c_train) return cmd_parity_train(train);
        if (*c_dec) return cmd_decompose_check(dec);
        if (*c_sch) return cmd_schedule_opt(sch);
        if (*c_en) return cmd_energy_scan(en);
        if (*c_tx) return cmd_textlab(tx);
        if (*c_sw) return cmd_sweep(sw);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
