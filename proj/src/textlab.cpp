#include "mdlab/textlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

#include "mdlab/report.hpp"

namespace mdlab {

Corpus Corpus::from_text(const std::string& text, int block_size, double test_fraction) {
    if (block_size < 2) {
        throw std::invalid_argument("block_size must be >= 2");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("test_fraction must lie in (0, 1)");
    }
    Corpus c;
    c.block_size = block_size;
    bool seen[256] = {};
    for (unsigned char ch : text) {
        seen[ch] = true;
    }
    int lookup[256];
    for (int b = 0; b < 256; ++b) {
        lookup[b] = -1;
        if (seen[b]) {
            lookup[b] = static_cast<int>(c.vocab.size());
            c.vocab.push_back(static_cast<unsigned char>(b));
        }
    }
    c.ids.reserve(text.size());
    for (unsigned char ch : text) {
        c.ids.push_back(lookup[ch]);
    }
    c.split = static_cast<std::size_t>(std::floor(static_cast<double>(c.ids.size()) * (1.0 - test_fraction)));
    const auto bs = static_cast<std::size_t>(block_size);
    if (c.split < bs + 1 || c.ids.size() - c.split < bs) {
        throw std::invalid_argument(
            fmt::format("corpus of {} symbols is too short for block_size {}", c.ids.size(), block_size));
    }
    return c;
}

std::size_t Corpus::test_blocks() const noexcept {
    return (ids.size() - split) / static_cast<std::size_t>(block_size);
}

Corpus load_corpus(const std::filesystem::path& path, int block_size, double test_fraction) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error(fmt::format("cannot read corpus {}", path.string()));
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Corpus::from_text(text, block_size, test_fraction);
}

TextExample corrupt_text(const std::vector<int>& x0, double t, int mask_id, Rng& rng) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::invalid_argument(fmt::format("masking rate must lie in [0, 1], got {}", t));
    }
    TextExample ex{x0, x0, t};
    for (auto& s : ex.xt) {
        if (rng.bernoulli(t)) {
            s = mask_id;
        }
    }
    return ex;
}

namespace {

IndicatorColumns text_columns(const std::vector<int>& xt, int vocab_size) {
    IndicatorColumns X;
    X.dim = vocab_size + 1 + static_cast<int>(xt.size());
    X.per_column = 2;
    X.rows.reserve(2 * xt.size());
    for (std::size_t j = 0; j < xt.size(); ++j) {
        X.rows.push_back(xt[j]);
        X.rows.push_back(vocab_size + 1 + static_cast<int>(j));
    }
    return X;
}

}  // namespace

double restricted_ce_loss(const TransformerParams& params, const std::vector<TextExample>& batch, int vocab_size,
                          int block_size, TransformerParams* grad) {
    if (batch.empty()) {
        throw std::invalid_argument("empty batch");
    }
    if (!params.V || params.V->rows() != vocab_size) {
        throw std::invalid_argument("text model needs a vocab head of size V");
    }
    const int mask_id = vocab_size;
    if (grad) {
        *grad = zeros_like(params);
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& ex : batch) {
        if (static_cast<int>(ex.xt.size()) != block_size || ex.x0.size() != ex.xt.size()) {
            throw std::invalid_argument("example length differs from block_size");
        }
        std::vector<int> masked;
        for (std::size_t j = 0; j < ex.xt.size(); ++j) {
            if (ex.xt[j] == mask_id) {
                masked.push_back(static_cast<int>(j));
            }
        }
        if (masked.empty()) {
            continue;
        }
        if (!(ex.t > 0.0)) {
            throw std::invalid_argument("t = 0 with masked positions");
        }
        const auto X = text_columns(ex.xt, vocab_size);
        const auto cache = transformer_forward(params, X);
        Matrix upstream;
        if (grad) {
            upstream = Matrix::Zero(vocab_size, block_size);
        }
        const double w = inv_b / ex.t;
        for (int j : masked) {
            const auto logits = cache.out.col(j);
            const double mx = logits.maxCoeff();
            const Vector e = (logits.array() - mx).exp().matrix();
            const double z = e.sum();
            const int y = ex.x0[static_cast<std::size_t>(j)];
            total -= w * (logits[y] - mx - std::log(z));
            if (grad) {
                upstream.col(j) = w * e / z;
                upstream(y, j) -= w;
            }
        }
        if (grad) {
            add_in_place(*grad, transformer_backward(params, X, cache, upstream));
        }
    }
    return total;
}

void TextConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
    if (block_size < 2) fail("block_size must be >= 2");
    if (hidden < 1 || batch < 1) fail("hidden and batch must be >= 1");
    if (steps < 0) fail("steps must be >= 0");
    if (!(lr > 0.0)) fail("lr must be > 0");
    if (!(t_lo >= 0.0 && t_lo <= t_hi && t_hi <= 1.0)) fail(fmt::format("need 0 <= t_lo <= t_hi <= 1, got [{}, {}]", t_lo, t_hi));
    if (eval_trials < 1) fail("eval_trials must be >= 1");
}

nlohmann::json to_json(const TextConfig& c) {
    return {{"block_size", c.block_size}, {"hidden", c.hidden},
            {"batch", c.batch},           {"steps", c.steps},
            {"lr", c.lr},                 {"weight_decay", c.weight_decay},
            {"attention_scale", c.attention_scale},
            {"t_lo", c.t_lo},             {"t_hi", c.t_hi},
            {"seed", c.seed},             {"eval_trials", c.eval_trials},
            {"test_fraction", c.test_fraction}};
}

TextConfig text_config_from_json(const nlohmann::json& j, TextConfig c) {
    if (!j.is_object()) {
        throw std::invalid_argument("text config must be a JSON object");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& key = it.key();
        const auto& v = it.value();
        if (key == "block_size") c.block_size = v.get<int>();
        else if (key == "hidden") c.hidden = v.get<int>();
        else if (key == "batch") c.batch = v.get<int>();
        else if (key == "steps") c.steps = v.get<std::int64_t>();
        else if (key == "lr") c.lr = v.get<double>();
        else if (key == "weight_decay") c.weight_decay = v.get<double>();
        else if (key == "attention_scale") c.attention_scale = v.get<double>();
        else if (key == "t_lo") c.t_lo = v.get<double>();
        else if (key == "t_hi") c.t_hi = v.get<double>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "eval_trials") c.eval_trials = v.get<std::int64_t>();
        else if (key == "test_fraction") c.test_fraction = v.get<double>();
        else throw std::invalid_argument(fmt::format("unknown text config key '{}'", key));
    }
    return c;
}

LossEstimate full_range_test_loss(const TransformerParams& params, const Corpus& corpus, std::int64_t trials,
                                  Rng& rng) {
    if (trials < 1) {
        throw std::invalid_argument("need at least one trial");
    }
    const auto bs = static_cast<std::size_t>(corpus.block_size);
    const std::size_t blocks = corpus.test_blocks();
    double mean = 0.0, m2 = 0.0;
    std::vector<TextExample> one(1);
    for (std::int64_t i = 0; i < trials; ++i) {
        const std::size_t start = corpus.split + bs * rng.below(blocks);
        const std::vector<int> x0(corpus.ids.begin() + static_cast<std::ptrdiff_t>(start),
                                  corpus.ids.begin() + static_cast<std::ptrdiff_t>(start + bs));
        TextExample ex;
        bool any = false;
        while (!any) {
            const double t = rng.uniform();
            ex = corrupt_text(x0, t, corpus.mask_id(), rng);
            any = std::find(ex.xt.begin(), ex.xt.end(), corpus.mask_id()) != ex.xt.end();
        }
        one[0] = std::move(ex);
        const double loss = restricted_ce_loss(params, one, corpus.vocab_size(), corpus.block_size);
        const double delta = loss - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (loss - mean);
    }
    const double var = trials > 1 ? m2 / static_cast<double>(trials - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(trials))};
}

TextRun train_text(const Corpus& corpus, const TextConfig& c) {
    c.validate();
    if (c.block_size != corpus.block_size) {
        throw std::invalid_argument("config and corpus block sizes differ");
    }
    Rng init_rng(c.seed, Stream::init);
    TextRun run{TransformerParams::init(c.hidden, corpus.input_dim(), init_rng, corpus.vocab_size(),
                                        c.attention_scale),
                {},
                false};
    auto& p = run.params;
    TransformerParams m = zeros_like(p), v = zeros_like(p), g = zeros_like(p);
    Rng data_rng(c.seed, Stream::corpus);
    Rng mask_rng(c.seed, Stream::masking);
    const auto bs = static_cast<std::size_t>(c.block_size);
    const std::size_t starts = corpus.split - bs + 1;
    const Schedule schedule = Schedule::uniform(c.t_lo, c.t_hi);
    constexpr double b1 = 0.9, b2 = 0.95, eps = 1e-8;
    std::vector<TextExample> batch(static_cast<std::size_t>(c.batch));
    for (std::int64_t step = 1; step <= c.steps; ++step) {
        for (auto& ex : batch) {
            const std::size_t s = data_rng.below(starts);
            const std::vector<int> x0(corpus.ids.begin() + static_cast<std::ptrdiff_t>(s),
                                      corpus.ids.begin() + static_cast<std::ptrdiff_t>(s + bs));
            ex = corrupt_text(x0, sample_rate(schedule, mask_rng), corpus.mask_id(), mask_rng);
        }
        const double loss = restricted_ce_loss(p, batch, corpus.vocab_size(), c.block_size, &g);
        run.train_loss.push_back(loss);
        if (!std::isfinite(loss)) {
            run.diverged = true;
            break;
        }
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
        std::vector<Eigen::Map<Vector>> th, gm, mm, vm;
        p.for_each_block([&](auto& b) { th.emplace_back(b.data(), b.size()); });
        g.for_each_block([&](auto& b) { gm.emplace_back(b.data(), b.size()); });
        m.for_each_block([&](auto& b) { mm.emplace_back(b.data(), b.size()); });
        v.for_each_block([&](auto& b) { vm.emplace_back(b.data(), b.size()); });
        for (std::size_t i = 0; i < th.size(); ++i) {
            mm[i] = b1 * mm[i] + (1.0 - b1) * gm[i];
            vm[i] = b2 * vm[i] + (1.0 - b2) * gm[i].cwiseAbs2();
            th[i] -= c.lr * ((mm[i] / bc1).array() / ((vm[i] / bc2).array().sqrt() + eps)).matrix();
            th[i] -= c.lr * c.weight_decay * th[i];
        }
    }
    return run;
}

IntervalSweepReport interval_sweep(const Corpus& corpus, const TextConfig& base, unsigned workers) {
    base.validate();
    IntervalSweepReport report;
    for (int i = 0; i < 10; ++i) {
        report.rows.push_back({i / 10.0, (i + 1) / 10.0, 0.0, 0.0, false});
    }
    report.rows.push_back({0.0, 1.0, 0.0, 0.0, false});
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r = next++; r < report.rows.size(); r = next++) {
            auto& row = report.rows[r];
            TextConfig c = base;
            c.t_lo = row.t_lo;
            c.t_hi = row.t_hi;
            const auto run = train_text(corpus, c);
            row.diverged = run.diverged;
            if (run.diverged) {
                row.final_test_loss = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            Rng eval_rng(base.seed, Stream::evaluation);
            const auto est = full_range_test_loss(run.params, corpus, base.eval_trials, eval_rng);
            row.final_test_loss = est.mean;
            row.std_error = est.std_error;
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(report.rows.size())));
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < n; ++w) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& th : pool) {
        th.join();
    }
    return report;
}

void write_sweep_csv(const std::filesystem::path& path, const IntervalSweepReport& report) {
    CsvWriter csv(path, {"t_lo", "t_hi", "final_test_loss"});
    for (const auto& r : report.rows) {
        csv.row({format_double(r.t_lo), format_double(r.t_hi), format_double(r.final_test_loss)});
    }
}

nlohmann::json to_json(const IntervalSweepReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"t_lo", r.t_lo},
                        {"t_hi", r.t_hi},
                        {"final_test_loss", r.final_test_loss},
                        {"std_error", r.std_error},
                        {"diverged", r.diverged}});
    }
    return {{"rows", rows}};
}

}  // namespace mdlab
