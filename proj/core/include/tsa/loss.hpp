#pragma once

// Transferable semantic augmentation objective.
//
// Each source feature f with label y is implicitly augmented as
// f~ ~ N(f + lambda * dmu_y, lambda * Sigma_y). The expected cross-entropy
// over that distribution is bounded above by the cross-entropy of the
// augmented logits
//
//   Z_c = logit_c + lambda (w_c - w_y)^T dmu_y
//                 + lambda / 2 (w_c - w_y)^T Sigma_y (w_c - w_y),
//
// which is what `transferable_loss` minimises. The statistics are treated
// as constants; gradients reach the head weights through both correction
// terms.

#include <cstddef>
#include <span>
#include <vector>

#include "tsa/linalg.hpp"
#include "tsa/network.hpp"
#include "tsa/stats.hpp"

namespace tsa {

// lambda = (t / T) * lambda0, ramping from 0 to lambda0.
double lambda_schedule(std::size_t t, std::size_t total, double lambda0);

// Throws IndexError for a label outside [0, C) and DimensionError when the
// statistics do not cover every class. Disabled classes add no correction.
Matrix augmented_logits(const Matrix& logits, std::span<const int> labels, const Matrix& head_w,
                        const ClassStats& stats, double lambda);

struct CrossEntropy {
    double value = 0.0;
    Matrix grad;  // d value / d scores
};

// Mean over rows of logsumexp(scores_i) - scores_i[y_i].
CrossEntropy cross_entropy(const Matrix& scores, std::span<const int> labels);

struct SurrogateLoss {
    double value = 0.0;
    Matrix augmented;    // Z
    Matrix grad_logits;  // d value / d logits (equal to d value / d Z)
    Matrix grad_head_w;  // contribution through the correction terms only
};

SurrogateLoss transferable_loss(const Matrix& logits, std::span<const int> labels,
                                const Matrix& head_w, const ClassStats& stats, double lambda);

struct MutualInformationLoss {
    double value = 0.0;
    Matrix grad_logits;
};

// sum_c Pbar_c log Pbar_c - (1/n) sum_j sum_c P_jc log P_jc with Pbar the
// mean of the rows and 0 log 0 = 0. The gradient is w.r.t. the logits that
// produced `probs` via softmax.
MutualInformationLoss mi_loss(const Matrix& probs);

double total_loss(double l_inf, double l_mi, double beta);

struct LossReport {
    double l_inf = 0.0;
    double l_mi = 0.0;
    double total = 0.0;
    double lambda = 0.0;
    Matrix grad_logits_source;
    Matrix grad_features_source;
    Matrix grad_head_w;  // correction-term part only
    Vector grad_head_b;  // correction-term part only (always zero)
    Matrix grad_logits_target;
};

LossReport tsa_loss(const ModelParams& params, const ForwardRecord& source,
                    std::span<const int> source_labels, const ForwardRecord& target,
                    const ClassStats& stats, double lambda, double beta);

// Full parameter gradient of report.total: both backward passes plus the
// head corrections.
Gradients tsa_gradients(const ModelParams& params, const ForwardRecord& source,
                        const ForwardRecord& target, const LossReport& report);

}  // namespace tsa
