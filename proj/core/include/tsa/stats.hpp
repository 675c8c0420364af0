#pragma once

// Per-class feature statistics for semantic augmentation: a memory of the
// latest feature and (pseudo-)label of every training sample, the
// accumulate-over-batches estimator it replaces, and the distance between
// an estimate and a fresh full-data recomputation.

#include <cstddef>
#include <span>
#include <vector>

#include "tsa/dataset.hpp"
#include "tsa/linalg.hpp"
#include "tsa/network.hpp"

namespace tsa {

// Slots [0, source_count) hold source samples in dataset order, the
// remaining slots hold target samples.
struct MemoryModule {
    Matrix features;  // slots x K
    std::vector<int> labels;
    std::vector<Domain> domains;
    std::vector<bool> initialized;
    std::size_t source_count = 0;

    std::size_t slot_count() const noexcept { return labels.size(); }
    std::size_t source_slot(std::size_t i) const noexcept { return i; }
    std::size_t target_slot(std::size_t j) const noexcept { return source_count + j; }
};

MemoryModule make_memory(std::size_t source_count, std::size_t target_count,
                         std::size_t feature_dim);

// One full forward pass: source slots take ground-truth labels, target
// slots take pseudo-labels of the current model.
MemoryModule memory_init(const DomainDataset& source, const DomainDataset& target,
                         const ModelParams& model);

// Overwrites the addressed slots; every other slot is left untouched.
void memory_update(MemoryModule& mem, std::span<const std::size_t> slots, const Matrix& features,
                   std::span<const int> labels);

struct ClassStatistics {
    Vector mu_s;
    Vector mu_t;
    Vector delta_mu;  // mu_t - mu_s
    Matrix sigma_t;   // population covariance of target features
    std::size_t count_s = 0;
    std::size_t count_t = 0;
    // False when either domain has no sample of the class; delta_mu and
    // sigma_t are then zero.
    bool enabled = false;
};

struct ClassStats {
    std::vector<ClassStatistics> classes;

    std::size_t class_count() const noexcept { return classes.size(); }
};

ClassStats estimate_class_stats(const MemoryModule& mem, std::size_t class_count);

// Stats computed from a fresh forward pass over both datasets with the
// current model. This is the reference the practical estimators are
// compared against.
ClassStats ideal_class_stats(const DomainDataset& source, const DomainDataset& target,
                             const ModelParams& model);

struct RunningMoments {
    Vector mean;
    Matrix covariance;
    std::size_t count = 0;
};

// Accumulated per-class moments over every batch seen so far.
struct IterativeState {
    std::vector<RunningMoments> classes;
};

IterativeState make_iterative_state(std::size_t class_count, std::size_t feature_dim);

// With B samples of class c in the batch and N seen before:
//   eta = B / (N + B)
//   mu  <- (1 - eta) mu + eta mu'
//   cov <- (1 - eta) cov + eta cov' + eta (1 - eta) (mu_old - mu')(mu_old - mu')^T
//   N   <- N + B
// Labels outside [0, C) are ignored.
void iterative_update(IterativeState& state, const Matrix& features, std::span<const int> labels);

// Source means and target means/covariances from two running states.
ClassStats stats_from_iterative(const IterativeState& source, const IterativeState& target);

struct EstimationBias {
    double mu = 0.0;     // mean over classes of ||delta_mu - delta_mu_ideal||_2
    double sigma = 0.0;  // mean over classes of ||sigma_t - sigma_t_ideal||_F
};

// Classes disabled in either argument are skipped; throws UndefinedBias
// when none remain.
EstimationBias estimation_bias(const ClassStats& practical, const ClassStats& ideal);

}  // namespace tsa
