#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdlab/masking.hpp"
#include "mdlab/model.hpp"
#include "mdlab/parity.hpp"

namespace mdlab {

enum class Arch { mlp, transformer };
enum class Optimizer { gd, adamw };
enum class Objective { md, supervised };

const char* to_string(Arch a) noexcept;
const char* to_string(Optimizer o) noexcept;
const char* to_string(Objective o) noexcept;
Arch parse_arch(const std::string& s);
Optimizer parse_optimizer(const std::string& s);

struct TrainConfig {
    Arch arch = Arch::mlp;
    int n = 10;
    int k = 4;
    std::uint64_t secret_seed = 0;
    std::size_t n_train = 2000;
    // Training set size for the supervised objective; 0 means n_train.
    std::size_t supervised_n_train = 0;
    std::size_t n_val = 1000;
    // Validation inputs disjoint from the training inputs.
    bool heldout_validation = true;
    Schedule schedule{0.0, 0.2};
    Optimizer optimizer = Optimizer::gd;
    double lr = 0.01;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    std::int64_t steps = 2000;
    std::int64_t eval_every = 20;
    std::uint64_t seed = 0;
    int hidden = 512;

    void validate() const;
    TaskSpec task() const { return TaskSpec::random(n, k, secret_seed); }
};

// Named presets: "desk" ((10,4), D = 512, AdamW lr 1e-3, supervised arm on
// 80 samples) and "full-20-6" ((20,6), D = 2560, full batch 5000, lr 1e-3).
TrainConfig preset(const std::string& name);
std::vector<std::string> preset_names();

nlohmann::json to_json(const TrainConfig& c);
// Overlays the keys present in j onto base. Unknown keys are an error.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct MetricsRow {
    std::int64_t step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

struct MetricsSeries {
    std::vector<MetricsRow> rows;
};

struct TrainResult {
    MetricsSeries metrics;
    ParityModel model;
    TaskSpec task;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Fraction of samples whose eval-masked output has the label's sign; 0 output is wrong.
double evaluate_accuracy(const ParityModel& model, const Dataset& dataset);

// Full-batch training on the masked-diffusion loss with fresh (t, M) per
// sample per step. Metrics at step 0, every eval_every steps and the last step.
TrainResult train_md(const TrainConfig& config);
// Full-batch training on the supervised squared loss at the eval mask.
TrainResult train_supervised(const TrainConfig& config);
TrainResult train(const TrainConfig& config, Objective objective);

struct GapResult {
    double step_train = 0.0;  // infinity when never crossed
    double step_val = 0.0;
    double gap = 0.0;
};

inline constexpr int kSustainedEvals = 3;

// First steps at which train / val accuracy reach the threshold for 3
// consecutive evaluations.
GapResult grokking_gap(const MetricsSeries& metrics, double threshold);

// Memorization plateau: starting at the first sustained train_acc == 1
// step, the run of evaluations with train_acc == 1 and val_acc < val_ceiling.
struct PlateauResult {
    double converge_step = 0.0;  // infinity when train never memorizes
    double window = 0.0;         // steps covered by the plateau
    bool open_ended = false;     // plateau lasts until the final evaluation
};

PlateauResult memorization_plateau(const MetricsSeries& metrics, double val_ceiling = 0.6);

void write_metrics_csv(const std::filesystem::path& path, const MetricsSeries& metrics);
nlohmann::json to_json(const MetricsRow& row);
nlohmann::json to_json(const GapResult& gap);
nlohmann::json run_summary(const TrainConfig& config, Objective objective, const TrainResult& result,
                           double threshold = 0.9);

}  // namespace mdlab
