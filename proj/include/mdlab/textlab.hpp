#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdlab/model.hpp"
#include "mdlab/rng.hpp"

namespace mdlab {

// Character corpus. Symbols are bytes; ids 0..V-1 follow byte order and
// mask_id() == V is reserved for MASK.
struct Corpus {
    std::vector<int> ids;
    std::vector<unsigned char> vocab;
    int block_size = 64;
    // ids[0, split) train, ids[split, end) test.
    std::size_t split = 0;

    static Corpus from_text(const std::string& text, int block_size, double test_fraction = 0.1);
    int vocab_size() const noexcept { return static_cast<int>(vocab.size()); }
    int mask_id() const noexcept { return vocab_size(); }
    // Embedding rows: token one-hot (V + 1 incl. MASK) stacked over position one-hot.
    int input_dim() const noexcept { return vocab_size() + 1 + block_size; }
    std::size_t test_blocks() const noexcept;
};

Corpus load_corpus(const std::filesystem::path& path, int block_size, double test_fraction = 0.1);

struct TextExample {
    std::vector<int> x0;
    std::vector<int> xt;
    double t = 1.0;
};

// Bernoulli(t) replacement of symbols by the MASK id.
TextExample corrupt_text(const std::vector<int>& x0, double t, int mask_id, Rng& rng);

// -(1/t) sum_{masked j} log p(x0_j | xt), averaged over the batch; the
// gradient is accumulated into grad when non-null.
double restricted_ce_loss(const TransformerParams& params, const std::vector<TextExample>& batch, int vocab_size,
                          int block_size, TransformerParams* grad = nullptr);

struct TextConfig {
    int block_size = 64;
    int hidden = 256;
    int batch = 32;
    std::int64_t steps = 1500;
    double lr = 3e-3;
    double weight_decay = 0.0;
    double attention_scale = 0.0;
    double t_lo = 0.0;
    double t_hi = 1.0;
    std::uint64_t seed = 0;
    std::int64_t eval_trials = 2000;
    double test_fraction = 0.1;

    void validate() const;
};

nlohmann::json to_json(const TextConfig& c);
TextConfig text_config_from_json(const nlohmann::json& j, TextConfig base = {});

struct LossEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

// Monte-Carlo restricted_ce_loss on held-out blocks with t ~ U[0, 1];
// draws with an empty mask are rejected and (t, M) redrawn.
LossEstimate full_range_test_loss(const TransformerParams& params, const Corpus& corpus, std::int64_t trials, Rng& rng);

struct TextRun {
    TransformerParams params;
    std::vector<double> train_loss;  // per step
    bool diverged = false;
};

// AdamW on restricted_ce_loss with t ~ U[t_lo, t_hi] and random train windows.
TextRun train_text(const Corpus& corpus, const TextConfig& config);

struct IntervalRow {
    double t_lo = 0.0;
    double t_hi = 1.0;
    double final_test_loss = 0.0;
    double std_error = 0.0;
    bool diverged = false;
};

struct IntervalSweepReport {
    std::vector<IntervalRow> rows;  // ten width-0.1 bins, then the U[0,1] baseline

    const IntervalRow& baseline() const { return rows.back(); }
};

// Every run shares the config (seed included) apart from [t_lo, t_hi], and
// all are scored with the same evaluation stream. Runs go to up to
// `workers` threads.
IntervalSweepReport interval_sweep(const Corpus& corpus, const TextConfig& base, unsigned workers = 1);

void write_sweep_csv(const std::filesystem::path& path, const IntervalSweepReport& report);
nlohmann::json to_json(const IntervalSweepReport& report);

}  // namespace mdlab
