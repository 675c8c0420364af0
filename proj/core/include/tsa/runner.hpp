#pragma once

// End-to-end training loop and the experiment harnesses built on it.
//
// One iteration, in order: ramp lambda, draw equal-size source and target
// batches, forward both, pseudo-label the target batch, write the batch
// into the memory, re-estimate class statistics, then one SGD step on
// L_inf + beta * L_MI.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tsa/config.hpp"
#include "tsa/dataset.hpp"
#include "tsa/loss.hpp"
#include "tsa/network.hpp"
#include "tsa/stats.hpp"

namespace tsa {

struct MetricsRow {
    std::size_t iter = 0;
    double lambda = 0.0;
    double loss_total = 0.0;
    double loss_inf = 0.0;
    double loss_mi = 0.0;
    double src_acc = 0.0;
    double tgt_acc = 0.0;  // NaN when the target set carries no labels
    double bias_mu = 0.0;  // NaN when every class is disabled
    double bias_sigma = 0.0;
};

struct DomainPair {
    DomainDataset source;
    DomainDataset target;
};

// 150 points per class with noise 0.1 for each domain; the target set is
// an independent draw rotated by 30 degrees about its centroid.
DomainPair make_two_moons_task(std::uint64_t seed);

inline constexpr std::size_t kMoonsPerClass = 150;
inline constexpr double kMoonsNoise = 0.1;
inline constexpr double kMoonsRotation = 30.0;

class Trainer {
public:
    // `target` keeps its ground-truth labels for evaluation; training only
    // sees pseudo-labels. Throws ConfigError on an invalid configuration
    // or incompatible datasets before doing any work.
    Trainer(DomainDataset source, DomainDataset target, TrainConfig config);

    void step();
    bool done() const noexcept { return iter_ >= config_.total_iters; }
    std::size_t iteration() const noexcept { return iter_; }

    const ModelParams& model() const noexcept { return model_; }
    const MemoryModule& memory() const noexcept { return memory_; }
    const LossReport& last_report() const noexcept { return report_; }
    const TrainConfig& config() const noexcept { return config_; }
    const DomainDataset& source() const noexcept { return source_; }
    const DomainDataset& target_train() const noexcept { return target_train_; }
    const DomainDataset& target_eval() const noexcept { return target_eval_; }

    ClassStats memory_stats() const;
    ClassStats iterative_stats() const;
    ClassStats ideal_stats() const;

    MetricsRow metrics_row() const;

private:
    ClassStats active_stats() const;

    DomainDataset source_;
    DomainDataset target_eval_;
    DomainDataset target_train_;
    TrainConfig config_;
    std::size_t classes_ = 0;
    Rng rng_;
    ModelParams model_;
    OptimizerState optimizer_;
    MemoryModule memory_;
    IterativeState iterative_source_;
    IterativeState iterative_target_;
    ClassStats stats_;
    LossReport report_;
    std::size_t iter_ = 0;
};

struct TrainResult {
    ModelParams model;
    std::vector<MetricsRow> metrics;
};

// Rows at every eval_interval-th iteration and at the last one.
TrainResult train(const DomainDataset& source, const DomainDataset& target,
                  const TrainConfig& config);

// Fraction of rows whose argmax prediction equals the label. Throws
// EvalError on an empty or partially unlabeled dataset.
double evaluate(const ModelParams& model, const DomainDataset& ds);

struct Bounds {
    double xmin = -2.0;
    double xmax = 3.0;
    double ymin = -2.0;
    double ymax = 2.5;
};

struct BoundaryPoint {
    double x = 0.0;
    double y = 0.0;
    int pred = 0;
};

// nx * ny grid including the four corners of `bounds`.
std::vector<BoundaryPoint> boundary_grid(const ModelParams& model, const Bounds& bounds,
                                         std::size_t nx, std::size_t ny);
std::string boundary_csv(std::span<const BoundaryPoint> grid);
void dump_boundary(const ModelParams& model, const Bounds& bounds, std::size_t nx,
                   std::size_t ny, const std::filesystem::path& path);

struct BiasRow {
    std::size_t epoch = 0;
    EstimationBias memory;
    EstimationBias iterative;
};

// Trains while comparing the memory and iterative estimators against a
// full fresh recomputation, once before training (epoch 0) and after every
// epoch of ceil(max(n_s, n_t) / B) iterations.
std::vector<BiasRow> bias_experiment(const DomainDataset& source, const DomainDataset& target,
                                     const TrainConfig& config);

struct SweepRow {
    double rho = 1.0;
    double target_accuracy = 0.0;
};

// One training run per rho on a stratified target subsample; accuracy is
// always measured on the full target set.
std::vector<SweepRow> rho_sweep(const DomainDataset& source, const DomainDataset& target,
                                const TrainConfig& config, std::span<const double> rhos);

std::string metrics_csv(std::span<const MetricsRow> rows);
std::string bias_csv(std::span<const BiasRow> rows);
std::string sweep_csv(std::span<const SweepRow> rows);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace tsa
