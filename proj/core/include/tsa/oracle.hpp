#pragma once

// Brute-force checks for the surrogate loss: explicit Gaussian augmentation
// of the features, the Gaussian moment-generating identity, and central
// finite differences against analytic gradients.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tsa/linalg.hpp"
#include "tsa/network.hpp"
#include "tsa/stats.hpp"

namespace tsa {

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t draws = 0;
};

// Jitter added to lambda * Sigma before factorising it for sampling.
inline constexpr double kSamplingJitter = 1e-6;

// Mean cross-entropy of explicitly augmented features
// f~ ~ N(f + lambda dmu_y, lambda Sigma_y), averaged over M draws of the
// whole batch. std_error is the sample std of the per-draw batch loss over
// sqrt(M). When every class in use is degenerate (lambda = 0, Sigma = 0 or
// disabled) the draws are skipped and the result is exact.
McEstimate monte_carlo_loss(const Matrix& features, std::span<const int> labels,
                            const Matrix& head_w, std::span<const double> head_b,
                            const ClassStats& stats, double lambda, std::size_t draws, Rng& rng);

// A batch of features, a linear head and class statistics: everything the
// surrogate loss and its Monte-Carlo counterpart consume.
struct AugmentationInstance {
    Matrix features;
    std::vector<int> labels;
    Matrix head_w;
    Vector head_b;
    ClassStats stats;
    double lambda = 0.0;
};

// Random instance with C in [2, max_classes], K in [1, max_dim], a random
// PSD target covariance (A A^T / K) and a random mean shift per class.
AugmentationInstance random_instance(Rng& rng, std::size_t max_classes, std::size_t max_dim,
                                     std::size_t batch, double lambda);

double surrogate_value(const AugmentationInstance& inst);

struct BoundReport {
    bool holds = false;
    double l_inf = 0.0;
    McEstimate mc;
    double margin = 0.0;  // l_inf - mc.value
};

// holds = mc.value <= l_inf + 3 * mc.std_error.
BoundReport verify_bound(const AugmentationInstance& inst, std::size_t draws, Rng& rng);

// |mean(exp(a X)) - exp(a mu + a^2 sigma / 2)| / exp(a mu + a^2 sigma / 2)
// for X ~ N(mu, sigma); sigma is the variance.
double mgf_check(double a, double mu, double sigma, std::size_t draws, Rng& rng);

struct LossProbe {
    // Extended precision so an evaluator may return a loss computed more
    // accurately than double.
    long double value = 0.0;
    // Inputs of every rectifier evaluated, in a fixed order. Empty for a
    // smooth loss.
    std::vector<double> rectifier_inputs;
};

using LossEvaluator = std::function<LossProbe(std::span<const double>)>;

struct AuditResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_near_kink = 0;
};

// Distance below which a rectifier input counts as sitting on the kink.
inline constexpr double kKinkMargin = 1e-4;

// Central differences per parameter, relative error against `analytic`
// with denominator max(|analytic|, |numeric|, 1e-12). A parameter is
// skipped when any rectifier input it moves lies within kKinkMargin of 0.
AuditResult finite_diff_audit(const LossEvaluator& evaluate, std::span<const double> params,
                              std::span<const double> analytic, double epsilon);

// Parameters in ModelParams::arrays() order.
Vector flatten(const ModelParams& params);
ModelParams unflatten(const ModelParams& shape, std::span<const double> flat);

enum class AuditedLoss { surrogate, mutual_information, total };

// A small network with a source batch, a target batch and fixed class
// statistics; the statistics are constants of the loss.
struct NetworkAuditCase {
    ModelParams params;
    Matrix source_inputs;
    std::vector<int> source_labels;
    Matrix target_inputs;
    ClassStats stats;
    double lambda = 0.0;
    double beta = 0.0;
};

// Input dim in [1, 4], one or two hidden layers of width up to max_width,
// C in [2, 5], batches of 6 source and 6 target rows, lambda in [0.1, 1].
// Networks with a hidden layer that is zero on a whole batch are redrawn.
NetworkAuditCase random_audit_case(Rng& rng, std::size_t max_width);

// Analytic parameter gradient of the chosen loss versus central
// differences through the whole network.
AuditResult audit_network_gradients(const NetworkAuditCase& c, AuditedLoss which, double epsilon);

}  // namespace tsa
