#include "tsa/loss.hpp"

#include <algorithm>
#include <cmath>

#include "tsa/errors.hpp"

namespace tsa {

double lambda_schedule(std::size_t t, std::size_t total, double lambda0) {
    if (total == 0) throw ConfigError("lambda_schedule: total iterations must be >= 1");
    if (t > total) throw ConfigError("lambda_schedule: t exceeds total iterations");
    return (static_cast<double>(t) / static_cast<double>(total)) * lambda0;
}

namespace {

void check_inputs(const Matrix& logits, std::span<const int> labels, const Matrix& head_w,
                  const ClassStats& stats) {
    if (labels.size() != logits.rows()) throw DimensionError("labels do not match batch size");
    if (head_w.rows() != logits.cols()) throw DimensionError("head rows do not match logits");
    if (stats.class_count() != logits.cols()) {
        throw DimensionError("class statistics do not cover every class");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
            throw IndexError("label " + std::to_string(y) + " out of range");
        }
    }
}

// The per-sample terms shared by the value and the gradient.
struct Correction {
    Vector diff;        // w_c - w_y
    Vector sigma_diff;  // Sigma_y (w_c - w_y)
};

Correction correction_for(const Matrix& head_w, std::size_t c, std::size_t y,
                          const ClassStatistics& cs) {
    Correction out;
    out.diff = subtract(head_w.row(c), head_w.row(y));
    out.sigma_diff = matvec(cs.sigma_t, out.diff);
    return out;
}

double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace

Matrix augmented_logits(const Matrix& logits, std::span<const int> labels, const Matrix& head_w,
                        const ClassStats& stats, double lambda) {
    check_inputs(logits, labels, head_w, stats);
    Matrix z = logits;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        const auto& cs = stats.classes[y];
        if (!cs.enabled) continue;
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            if (c == y) continue;
            const auto corr = correction_for(head_w, c, y, cs);
            const double shift = dot(corr.diff, cs.delta_mu);
            const double spread = dot(corr.diff, corr.sigma_diff);
            z(i, c) = logits(i, c) + lambda * shift + 0.5 * lambda * spread;
        }
    }
    return z;
}

CrossEntropy cross_entropy(const Matrix& scores, std::span<const int> labels) {
    if (labels.size() != scores.rows()) throw DimensionError("labels do not match batch size");
    CrossEntropy out;
    out.grad = Matrix(scores.rows(), scores.cols());
    if (scores.rows() == 0) return out;
    const double n = static_cast<double>(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const auto y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= scores.cols()) {
            throw IndexError("label " + std::to_string(y) + " out of range");
        }
        const auto row = scores.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double s : row) sum += std::exp(s - mx);
        const double lse = mx + std::log(sum);
        out.value += lse - row[static_cast<std::size_t>(y)];
        auto g = out.grad.row(i);
        for (std::size_t c = 0; c < row.size(); ++c) g[c] = std::exp(row[c] - lse) / n;
        g[static_cast<std::size_t>(y)] -= 1.0 / n;
    }
    out.value /= n;
    return out;
}

SurrogateLoss transferable_loss(const Matrix& logits, std::span<const int> labels,
                                const Matrix& head_w, const ClassStats& stats, double lambda) {
    SurrogateLoss out;
    out.augmented = augmented_logits(logits, labels, head_w, stats, lambda);
    auto ce = cross_entropy(out.augmented, labels);
    out.value = ce.value;
    out.grad_logits = std::move(ce.grad);
    out.grad_head_w = Matrix(head_w.rows(), head_w.cols());

    // dZ_c/dw_c = lambda (dmu + Sigma d_c) and dZ_c/dw_y is its negative.
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        const auto& cs = stats.classes[y];
        if (!cs.enabled) continue;
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            if (c == y) continue;
            const double g = out.grad_logits(i, c);
            const auto corr = correction_for(head_w, c, y, cs);
            auto gc = out.grad_head_w.row(c);
            auto gy = out.grad_head_w.row(y);
            for (std::size_t k = 0; k < gc.size(); ++k) {
                const double v = g * lambda * (cs.delta_mu[k] + corr.sigma_diff[k]);
                gc[k] += v;
                gy[k] -= v;
            }
        }
    }
    return out;
}

MutualInformationLoss mi_loss(const Matrix& probs) {
    MutualInformationLoss out;
    const std::size_t n = probs.rows();
    const std::size_t classes = probs.cols();
    out.grad_logits = Matrix(n, classes);
    if (n == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n);

    Vector marginal(classes, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < classes; ++c) marginal[c] += probs(j, c);
    for (double& p : marginal) p *= inv_n;

    double neg_marginal_entropy = 0.0;
    for (double p : marginal) neg_marginal_entropy += xlogx(p);
    double conditional_entropy = 0.0;
    for (double p : probs.data()) conditional_entropy -= xlogx(p);
    conditional_entropy *= inv_n;
    out.value = neg_marginal_entropy + conditional_entropy;

    // dL/dP_jc = (log Pbar_c - log P_jc) / n, pushed through the softmax
    // Jacobian. Terms with P_jc = 0 vanish in the limit.
    Vector weighted(classes);
    for (std::size_t j = 0; j < n; ++j) {
        const auto p = probs.row(j);
        double total = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            weighted[c] = p[c] > 0.0 ? p[c] * (std::log(marginal[c]) - std::log(p[c])) * inv_n : 0.0;
            total += weighted[c];
        }
        auto g = out.grad_logits.row(j);
        for (std::size_t c = 0; c < classes; ++c) g[c] = weighted[c] - p[c] * total;
    }
    return out;
}

double total_loss(double l_inf, double l_mi, double beta) { return l_inf + beta * l_mi; }

LossReport tsa_loss(const ModelParams& params, const ForwardRecord& source,
                    std::span<const int> source_labels, const ForwardRecord& target,
                    const ClassStats& stats, double lambda, double beta) {
    LossReport r;
    r.lambda = lambda;

    auto surrogate = transferable_loss(source.logits, source_labels, params.head_w, stats, lambda);
    r.l_inf = surrogate.value;
    r.grad_logits_source = std::move(surrogate.grad_logits);
    r.grad_features_source = Matrix(source.features.rows(), source.features.cols());
    r.grad_head_w = std::move(surrogate.grad_head_w);
    r.grad_head_b = Vector(params.head_b.size(), 0.0);

    const auto mi = mi_loss(softmax(target.logits));
    r.l_mi = mi.value;
    r.grad_logits_target = scale(mi.grad_logits, beta);

    r.total = total_loss(r.l_inf, r.l_mi, beta);
    return r;
}

Gradients tsa_gradients(const ModelParams& params, const ForwardRecord& source,
                        const ForwardRecord& target, const LossReport& report) {
    Gradients g = backward(params, source, report.grad_logits_source, report.grad_features_source);
    if (target.inputs.rows() > 0) {
        accumulate(g, backward(params, target, report.grad_logits_target,
                               Matrix(target.features.rows(), target.features.cols())));
    }
    auto gw = g.head_w.data();
    const auto aw = report.grad_head_w.data();
    for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += aw[k];
    for (std::size_t k = 0; k < g.head_b.size(); ++k) g.head_b[k] += report.grad_head_b[k];
    return g;
}

}  // namespace tsa
