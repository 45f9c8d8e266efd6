#include "mdlab/trainer.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mdlab/objective.hpp"
#include "mdlab/report.hpp"

namespace mdlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class P>
std::vector<Eigen::Map<Vector>> flat_views(P& p) {
    std::vector<Eigen::Map<Vector>> out;
    p.for_each_block([&](auto& b) { out.emplace_back(b.data(), b.size()); });
    return out;
}

// Full-batch optimizer state for one parameter container.
template <class P>
class Stepper {
public:
    Stepper(const TrainConfig& c, const P& like) : c_(c) {
        if (c.optimizer == Optimizer::adamw) {
            m_ = zeros_like(like);
            v_ = zeros_like(like);
        }
    }

    // Decoupled decay: theta -= lr * (update + wd * theta).
    void step(P& params, P& grad) {
        ++t_;
        auto theta = flat_views(params);
        auto g = flat_views(grad);
        if (c_.optimizer == Optimizer::gd) {
            for (std::size_t i = 0; i < theta.size(); ++i) {
                theta[i] -= c_.lr * (g[i] + c_.weight_decay * theta[i]);
            }
            return;
        }
        auto m = flat_views(*m_);
        auto v = flat_views(*v_);
        const double bc1 = 1.0 - std::pow(c_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(c_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = c_.beta1 * m[i] + (1.0 - c_.beta1) * g[i];
            v[i] = c_.beta2 * v[i] + (1.0 - c_.beta2) * g[i].cwiseAbs2();
            theta[i] -= c_.lr * ((m[i] / bc1).array() / ((v[i] / bc2).array().sqrt() + c_.eps)).matrix();
            theta[i] -= c_.lr * c_.weight_decay * theta[i];
        }
    }

private:
    const TrainConfig& c_;
    std::optional<P> m_;
    std::optional<P> v_;
    std::int64_t t_ = 0;
};

// One corrupted view of every sample.
struct MaskedBatch {
    std::vector<CorruptedSequence> x_tilde;
    std::vector<MaskVector> masks;
    std::vector<double> t;
};

MaskedBatch draw_masks(const Dataset& data, const Schedule& schedule, Rng& rng) {
    MaskedBatch b;
    const int n_prime = data.spec.n_prime();
    b.x_tilde.reserve(data.size());
    b.masks.reserve(data.size());
    b.t.reserve(data.size());
    for (const auto& x : data.samples) {
        const double t = sample_rate(schedule, rng);
        auto mask = sample_mask(t, n_prime, rng);
        b.x_tilde.push_back(corrupt(x, mask));
        b.masks.push_back(std::move(mask));
        b.t.push_back(t);
    }
    return b;
}

MaskedBatch eval_masks(const Dataset& data) {
    MaskedBatch b;
    const auto mask = evaluation_mask(data.spec.n_prime());
    for (const auto& x : data.samples) {
        b.x_tilde.push_back(corrupt(x, mask));
        b.masks.push_back(mask);
        b.t.push_back(1.0);
    }
    return b;
}

Matrix aggregate_batch(const std::vector<CorruptedSequence>& xs, const EmbeddingSpec& emb) {
    Matrix Z = Matrix::Zero(emb.d(), static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (int j = 1; j <= emb.n_prime; ++j) {
            Z(emb.index_of(xs[i].values[static_cast<std::size_t>(j - 1)], j), static_cast<Eigen::Index>(i)) += 1.0;
        }
    }
    return Z;
}

IndicatorColumns one_hot_columns(const CorruptedSequence& x, const EmbeddingSpec& emb) {
    IndicatorColumns X;
    X.dim = emb.d();
    X.per_column = 1;
    X.rows.reserve(x.size());
    for (int j = 1; j <= emb.n_prime; ++j) {
        X.rows.push_back(emb.index_of(x.values[static_cast<std::size_t>(j - 1)], j));
    }
    return X;
}

// Loss and gradient of the batch. Gradient only when grad != nullptr.
template <class P>
double batch_loss(const P& params, const Dataset& data, const MaskedBatch& batch, Objective objective, P* grad);

template <>
double batch_loss<MlpParams>(const MlpParams& params, const Dataset& data, const MaskedBatch& batch,
                             Objective objective, MlpParams* grad) {
    const EmbeddingSpec emb{data.spec.n_prime()};
    const Matrix Z = aggregate_batch(batch.x_tilde, emb);
    const auto fwd = mlp_forward_batch(params, Z);
    const double inv_n = 1.0 / static_cast<double>(data.size());
    RowVector upstream = RowVector::Zero(Z.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& x = data.samples[i];
        const double f = fwd.output[static_cast<Eigen::Index>(i)];
        if (objective == Objective::supervised) {
            const double r = f - x.label();
            loss += r * r * inv_n;
            upstream[static_cast<Eigen::Index>(i)] = 2.0 * r * inv_n;
            continue;
        }
        const auto& mask = batch.masks[i];
        double sq = 0.0, lin = 0.0;
        int masked = 0;
        for (std::size_t j = 0; j < mask.size(); ++j) {
            if (mask.m[j]) {
                const double r = f - x.bits[j];
                sq += r * r;
                lin += r;
                ++masked;
            }
        }
        if (masked == 0) {
            continue;
        }
        const double t = batch.t[i];
        loss += sq / (2.0 * t) * inv_n;
        upstream[static_cast<Eigen::Index>(i)] = lin / t * inv_n;
    }
    if (grad) {
        *grad = mlp_backward_batch(params, Z, fwd, upstream);
    }
    return loss;
}

template <>
double batch_loss<TransformerParams>(const TransformerParams& params, const Dataset& data, const MaskedBatch& batch,
                                     Objective objective, TransformerParams* grad) {
    const EmbeddingSpec emb{data.spec.n_prime()};
    const int n_prime = emb.n_prime;
    const double inv_n = 1.0 / static_cast<double>(data.size());
    if (grad) {
        *grad = zeros_like(params);
    }
    double loss = 0.0;
    Matrix upstream(1, n_prime);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& x = data.samples[i];
        const auto X = one_hot_columns(batch.x_tilde[i], emb);
        const auto cache = transformer_forward(params, X);
        upstream.setZero();
        bool any = false;
        if (objective == Objective::supervised) {
            const double r = cache.out(0, n_prime - 1) - x.label();
            loss += r * r * inv_n;
            upstream(0, n_prime - 1) = 2.0 * r * inv_n;
            any = true;
        } else {
            const double t = batch.t[i];
            for (int j = 0; j < n_prime; ++j) {
                if (batch.masks[i].m[static_cast<std::size_t>(j)]) {
                    const double r = cache.out(0, j) - x.bits[static_cast<std::size_t>(j)];
                    loss += r * r / (2.0 * t) * inv_n;
                    upstream(0, j) = r / t * inv_n;
                    any = true;
                }
            }
        }
        if (grad && any) {
            add_in_place(*grad, transformer_backward(params, X, cache, upstream));
        }
    }
    return loss;
}

double accuracy_of(const MlpParams& params, const Dataset& data) {
    const EmbeddingSpec emb{data.spec.n_prime()};
    const auto fwd = mlp_forward_batch(params, aggregate_batch(eval_masks(data).x_tilde, emb));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double f = fwd.output[static_cast<Eigen::Index>(i)];
        hits += (f != 0.0 && (f > 0.0) == (data.samples[i].label() > 0)) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

double accuracy_of(const TransformerParams& params, const Dataset& data) {
    const EmbeddingSpec emb{data.spec.n_prime()};
    const auto mask = evaluation_mask(emb.n_prime);
    std::size_t hits = 0;
    for (const auto& x : data.samples) {
        const auto cache = transformer_forward(params, one_hot_columns(corrupt(x, mask), emb));
        const double f = cache.out(0, emb.n_prime - 1);
        hits += (f != 0.0 && (f > 0.0) == (x.label() > 0)) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

struct Data {
    TaskSpec task;
    Dataset train;
    Dataset val;
};

Data make_data(const TrainConfig& c, Objective objective) {
    Data d;
    d.task = c.task();
    const std::size_t n_train =
        objective == Objective::supervised && c.supervised_n_train > 0 ? c.supervised_n_train : c.n_train;
    d.train = sample_dataset(d.task, n_train, c.seed);
    d.val = c.heldout_validation ? sample_heldout_dataset(d.task, c.n_val, c.seed, d.train)
                                 : sample_dataset(d.task, c.n_val, splitmix64(c.seed ^ 0x76616cULL));
    return d;
}

template <class P>
TrainResult run(const TrainConfig& c, Objective objective, P params, const Data& data) {
    TrainResult result{{}, params, data.task};
    // Fixed corruption draws so reported MD losses are comparable across steps.
    Rng eval_rng(c.seed, Stream::evaluation);
    const auto train_eval = objective == Objective::md ? draw_masks(data.train, c.schedule, eval_rng)
                                                       : eval_masks(data.train);
    const auto val_eval = objective == Objective::md ? draw_masks(data.val, c.schedule, eval_rng)
                                                     : eval_masks(data.val);
    auto record = [&](std::int64_t step) {
        MetricsRow row;
        row.step = step;
        row.train_loss = batch_loss<P>(params, data.train, train_eval, objective, nullptr);
        row.val_loss = batch_loss<P>(params, data.val, val_eval, objective, nullptr);
        row.train_acc = accuracy_of(params, data.train);
        row.val_acc = accuracy_of(params, data.val);
        result.metrics.rows.push_back(row);
    };
    record(0);
    Rng mask_rng(c.seed, Stream::masking);
    Stepper<P> opt(c, params);
    const auto fixed = objective == Objective::supervised ? eval_masks(data.train) : MaskedBatch{};
    P grad = zeros_like(params);
    for (std::int64_t step = 1; step <= c.steps; ++step) {
        const double loss = objective == Objective::md
                                ? batch_loss<P>(params, data.train, draw_masks(data.train, c.schedule, mask_rng),
                                                objective, &grad)
                                : batch_loss<P>(params, data.train, fixed, objective, &grad);
        if (!std::isfinite(loss)) {
            throw TrainingDiverged(fmt::format("{} loss became {} at step {} (lr {}, weight decay {})",
                                               to_string(objective), loss, step, c.lr, c.weight_decay));
        }
        opt.step(params, grad);
        if (!all_finite(ParityModel{params})) {
            throw TrainingDiverged(fmt::format("non-finite parameters after step {} (lr {})", step, c.lr));
        }
        if (step % c.eval_every == 0 || step == c.steps) {
            record(step);
        }
    }
    result.model = std::move(params);
    return result;
}

}  // namespace

const char* to_string(Arch a) noexcept {
    return a == Arch::mlp ? "mlp" : "transformer";
}
const char* to_string(Optimizer o) noexcept {
    return o == Optimizer::gd ? "gd" : "adamw";
}
const char* to_string(Objective o) noexcept {
    return o == Objective::md ? "md" : "supervised";
}

Arch parse_arch(const std::string& s) {
    if (s == "mlp") return Arch::mlp;
    if (s == "transformer") return Arch::transformer;
    throw std::invalid_argument(fmt::format("unknown arch '{}' (mlp | transformer)", s));
}

Optimizer parse_optimizer(const std::string& s) {
    if (s == "gd" || s == "sgd") return Optimizer::gd;
    if (s == "adamw") return Optimizer::adamw;
    throw std::invalid_argument(fmt::format("unknown optimizer '{}' (gd | adamw)", s));
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
    if (!(lr > 0.0)) fail(fmt::format("lr must be > 0, got {}", lr));
    if (steps < 0) fail(fmt::format("steps must be >= 0, got {}", steps));
    if (eval_every < 1) fail("eval_every must be >= 1");
    if (n_train < 1 || n_val < 1) fail("n_train and n_val must be >= 1");
    if (hidden < 1) fail("hidden width must be >= 1");
    if (weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (k < 1 || k > n) fail(fmt::format("need 1 <= k <= n, got n = {}, k = {}", n, k));
    Schedule::uniform(schedule.t0, schedule.t1);
}

TrainConfig preset(const std::string& name) {
    TrainConfig c;
    if (name == "desk") {
        c.optimizer = Optimizer::adamw;
        c.lr = 1e-3;
        c.supervised_n_train = 80;
        return c;
    }
    if (name == "full-20-6") {
        c.n = 20;
        c.k = 6;
        c.hidden = 2560;
        c.n_train = 5000;
        c.n_val = 5000;
        c.optimizer = Optimizer::adamw;
        c.lr = 1e-3;
        c.weight_decay = 0.1;
        c.steps = 20000;
        c.eval_every = 100;
        return c;
    }
    throw std::invalid_argument(fmt::format("unknown preset '{}'", name));
}

std::vector<std::string> preset_names() {
    return {"desk", "full-20-6"};
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"arch", to_string(c.arch)},
            {"n", c.n},
            {"k", c.k},
            {"secret_seed", c.secret_seed},
            {"n_train", c.n_train},
            {"supervised_n_train", c.supervised_n_train},
            {"n_val", c.n_val},
            {"heldout_validation", c.heldout_validation},
            {"t0", c.schedule.t0},
            {"t1", c.schedule.t1},
            {"optimizer", to_string(c.optimizer)},
            {"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps},
            {"steps", c.steps},
            {"eval_every", c.eval_every},
            {"seed", c.seed},
            {"hidden", c.hidden}};
}

TrainConfig config_from_json(const nlohmann::json& j, TrainConfig c) {
    if (!j.is_object()) {
        throw std::invalid_argument("train config must be a JSON object");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& key = it.key();
        const auto& v = it.value();
        if (key == "arch") c.arch = parse_arch(v.get<std::string>());
        else if (key == "n") c.n = v.get<int>();
        else if (key == "k") c.k = v.get<int>();
        else if (key == "secret_seed") c.secret_seed = v.get<std::uint64_t>();
        else if (key == "n_train") c.n_train = v.get<std::size_t>();
        else if (key == "supervised_n_train") c.supervised_n_train = v.get<std::size_t>();
        else if (key == "n_val") c.n_val = v.get<std::size_t>();
        else if (key == "heldout_validation") c.heldout_validation = v.get<bool>();
        else if (key == "t0") c.schedule.t0 = v.get<double>();
        else if (key == "t1") c.schedule.t1 = v.get<double>();
        else if (key == "optimizer") c.optimizer = parse_optimizer(v.get<std::string>());
        else if (key == "lr") c.lr = v.get<double>();
        else if (key == "weight_decay") c.weight_decay = v.get<double>();
        else if (key == "beta1") c.beta1 = v.get<double>();
        else if (key == "beta2") c.beta2 = v.get<double>();
        else if (key == "eps") c.eps = v.get<double>();
        else if (key == "steps") c.steps = v.get<std::int64_t>();
        else if (key == "eval_every") c.eval_every = v.get<std::int64_t>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "hidden") c.hidden = v.get<int>();
        else throw std::invalid_argument(fmt::format("unknown train config key '{}'", key));
    }
    return c;
}

double evaluate_accuracy(const ParityModel& model, const Dataset& dataset) {
    if (dataset.size() == 0) {
        throw std::invalid_argument("accuracy over an empty dataset");
    }
    return std::visit([&](const auto& p) { return accuracy_of(p, dataset); }, model);
}

TrainResult train(const TrainConfig& config, Objective objective) {
    config.validate();
    const auto data = make_data(config, objective);
    const EmbeddingSpec emb{data.task.n_prime()};
    Rng init_rng(config.seed, Stream::init);
    if (config.arch == Arch::mlp) {
        return run(config, objective, MlpParams::init(config.hidden, emb.d(), init_rng), data);
    }
    return run(config, objective, TransformerParams::init(config.hidden, emb.d(), init_rng), data);
}

TrainResult train_md(const TrainConfig& config) {
    return train(config, Objective::md);
}

TrainResult train_supervised(const TrainConfig& config) {
    return train(config, Objective::supervised);
}

namespace {

double first_sustained(const MetricsSeries& m, double threshold, bool val) {
    const auto& r = m.rows;
    for (std::size_t i = 0; i + kSustainedEvals <= r.size(); ++i) {
        bool ok = true;
        for (std::size_t j = i; j < i + kSustainedEvals; ++j) {
            ok = ok && (val ? r[j].val_acc : r[j].train_acc) >= threshold;
        }
        if (ok) {
            return static_cast<double>(r[i].step);
        }
    }
    return kInf;
}

}  // namespace

GapResult grokking_gap(const MetricsSeries& metrics, double threshold) {
    if (!(threshold > 0.5 && threshold <= 1.0)) {
        throw std::invalid_argument(fmt::format("threshold must lie in (0.5, 1], got {}", threshold));
    }
    GapResult g;
    g.step_train = first_sustained(metrics, threshold, false);
    g.step_val = first_sustained(metrics, threshold, true);
    g.gap = std::isinf(g.step_train) || std::isinf(g.step_val) ? kInf : g.step_val - g.step_train;
    return g;
}

PlateauResult memorization_plateau(const MetricsSeries& metrics, double val_ceiling) {
    PlateauResult p;
    p.converge_step = first_sustained(metrics, 1.0, false);
    if (std::isinf(p.converge_step)) {
        return p;
    }
    const auto& r = metrics.rows;
    std::size_t i = 0;
    while (static_cast<double>(r[i].step) < p.converge_step) ++i;
    const std::size_t start = i;
    while (i < r.size() && r[i].train_acc == 1.0 && r[i].val_acc < val_ceiling) ++i;
    if (i == start) {
        return p;
    }
    p.open_ended = i == r.size();
    // The plateau holds up to the last qualifying evaluation.
    p.window = static_cast<double>(r[i - 1].step - r[start].step);
    return p;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsSeries& metrics) {
    CsvWriter csv(path, {"step", "train_loss", "val_loss", "train_acc", "val_acc"});
    for (const auto& r : metrics.rows) {
        csv.row({format_int(r.step), format_double(r.train_loss), format_double(r.val_loss),
                 format_double(r.train_acc), format_double(r.val_acc)});
    }
}

nlohmann::json to_json(const MetricsRow& r) {
    return {{"step", r.step}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss},
            {"train_acc", r.train_acc}, {"val_acc", r.val_acc}};
}

nlohmann::json to_json(const GapResult& g) {
    // Infinite steps serialize as null.
    return {{"step_train", g.step_train}, {"step_val", g.step_val}, {"gap", g.gap}};
}

nlohmann::json run_summary(const TrainConfig& config, Objective objective, const TrainResult& result,
                           double threshold) {
    nlohmann::json j;
    j["objective"] = to_string(objective);
    j["config"] = to_json(config);
    j["task"] = to_json(result.task);
    j["final"] = result.metrics.rows.empty() ? nlohmann::json() : to_json(result.metrics.rows.back());
    j["threshold"] = threshold;
    j["grokking_gap"] = to_json(grokking_gap(result.metrics, threshold));
    const auto p = memorization_plateau(result.metrics);
    j["plateau"] = {{"converge_step", p.converge_step}, {"window", p.window}, {"open_ended", p.open_ended}};
    return j;
}

}  // namespace mdlab
