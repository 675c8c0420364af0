#include "tsa/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "tsa/errors.hpp"
#include "tsa/loss.hpp"

namespace tsa {

namespace {

// Cross-entropy of one feature vector under the head, log-sum-exp form.
double sample_loss(std::span<const double> f, const Matrix& head_w, std::span<const double> head_b,
                   std::size_t y, Vector& scratch) {
    const std::size_t classes = head_w.rows();
    double mx = -INFINITY;
    for (std::size_t c = 0; c < classes; ++c) {
        scratch[c] = dot(head_w.row(c), f) + head_b[c];
        mx = std::max(mx, scratch[c]);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(scratch[c] - mx);
    return mx + std::log(sum) - scratch[y];
}

bool is_zero(const Matrix& m) {
    const auto d = m.data();
    return std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; });
}

}  // namespace

McEstimate monte_carlo_loss(const Matrix& features, std::span<const int> labels,
                            const Matrix& head_w, std::span<const double> head_b,
                            const ClassStats& stats, double lambda, std::size_t draws, Rng& rng) {
    if (draws == 0) throw ConfigError("monte_carlo_loss: draws must be >= 1");
    if (lambda < 0.0) throw ConfigError("monte_carlo_loss: lambda must be >= 0");
    if (labels.size() != features.rows()) throw DimensionError("monte_carlo_loss: labels");
    if (head_w.cols() != features.cols() || head_b.size() != head_w.rows()) {
        throw DimensionError("monte_carlo_loss: head shape");
    }
    if (stats.class_count() != head_w.rows()) {
        throw DimensionError("monte_carlo_loss: class statistics do not cover every class");
    }
    const std::size_t n = features.rows();
    const std::size_t dim = features.cols();
    const std::size_t classes = head_w.rows();

    // Per sample: shifted mean, and the factor of its covariance if random.
    std::vector<Vector> centers(n);
    std::vector<const Matrix*> factors(n, nullptr);
    std::vector<Matrix> chol(classes);
    std::vector<bool> random_class(classes, false);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto& cs = stats.classes[c];
        if (cs.enabled && lambda > 0.0 && !is_zero(cs.sigma_t)) {
            chol[c] = cholesky(scale(cs.sigma_t, lambda), kSamplingJitter);
            random_class[c] = true;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw IndexError("monte_carlo_loss: label out of range");
        }
        const auto& cs = stats.classes[static_cast<std::size_t>(y)];
        centers[i].assign(features.row(i).begin(), features.row(i).end());
        if (cs.enabled) {
            for (std::size_t k = 0; k < dim; ++k) centers[i][k] += lambda * cs.delta_mu[k];
        }
        if (random_class[static_cast<std::size_t>(y)]) factors[i] = &chol[static_cast<std::size_t>(y)];
    }

    Vector scratch(classes);
    McEstimate est;
    est.draws = draws;
    const bool deterministic =
        std::none_of(factors.begin(), factors.end(), [](const Matrix* f) { return f != nullptr; });
    if (deterministic || n == 0) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            total += sample_loss(centers[i], head_w, head_b, static_cast<std::size_t>(labels[i]), scratch);
        est.value = n ? total / static_cast<double>(n) : 0.0;
        return est;
    }

    // Welford accumulation of the per-draw batch loss.
    double running_mean = 0.0;
    double m2 = 0.0;
    for (std::size_t m = 0; m < draws; ++m) {
        double batch = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto y = static_cast<std::size_t>(labels[i]);
            if (factors[i] == nullptr) {
                batch += sample_loss(centers[i], head_w, head_b, y, scratch);
            } else {
                const Vector f = sample_mvn(centers[i], *factors[i], rng);
                batch += sample_loss(f, head_w, head_b, y, scratch);
            }
        }
        batch /= static_cast<double>(n);
        const double delta = batch - running_mean;
        running_mean += delta / static_cast<double>(m + 1);
        m2 += delta * (batch - running_mean);
    }
    est.value = running_mean;
    const double variance = draws > 1 ? m2 / static_cast<double>(draws - 1) : 0.0;
    est.std_error = std::sqrt(variance / static_cast<double>(draws));
    return est;
}

AugmentationInstance random_instance(Rng& rng, std::size_t max_classes, std::size_t max_dim,
                                     std::size_t batch, double lambda) {
    if (max_classes < 2 || max_dim < 1 || batch < 1) {
        throw ConfigError("random_instance: need >= 2 classes, >= 1 dim, >= 1 sample");
    }
    std::uniform_int_distribution<std::size_t> pick_c(2, max_classes);
    std::uniform_int_distribution<std::size_t> pick_k(1, max_dim);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t classes = pick_c(rng);
    const std::size_t dim = pick_k(rng);

    AugmentationInstance inst;
    inst.lambda = lambda;
    inst.features = Matrix(batch, dim);
    for (double& v : inst.features.data()) v = normal(rng);
    std::uniform_int_distribution<int> pick_y(0, static_cast<int>(classes) - 1);
    inst.labels.resize(batch);
    for (int& y : inst.labels) y = pick_y(rng);
    inst.head_w = Matrix(classes, dim);
    for (double& v : inst.head_w.data()) v = normal(rng);
    inst.head_b.resize(classes);
    for (double& v : inst.head_b) v = 0.5 * normal(rng);

    inst.stats.classes.resize(classes);
    for (auto& cs : inst.stats.classes) {
        Matrix a(dim, dim);
        for (double& v : a.data()) v = normal(rng);
        cs.sigma_t = scale(matmul_transposed(a, a), 1.0 / static_cast<double>(dim));
        cs.delta_mu.resize(dim);
        for (double& v : cs.delta_mu) v = normal(rng);
        cs.mu_s = Vector(dim, 0.0);
        cs.mu_t = cs.delta_mu;
        cs.count_s = 1;
        cs.count_t = 1;
        cs.enabled = true;
    }
    return inst;
}

double surrogate_value(const AugmentationInstance& inst) {
    Matrix logits = matmul_transposed(inst.features, inst.head_w);
    for (std::size_t i = 0; i < logits.rows(); ++i)
        for (std::size_t c = 0; c < logits.cols(); ++c) logits(i, c) += inst.head_b[c];
    return transferable_loss(logits, inst.labels, inst.head_w, inst.stats, inst.lambda).value;
}

BoundReport verify_bound(const AugmentationInstance& inst, std::size_t draws, Rng& rng) {
    BoundReport r;
    r.l_inf = surrogate_value(inst);
    r.mc = monte_carlo_loss(inst.features, inst.labels, inst.head_w, inst.head_b, inst.stats,
                            inst.lambda, draws, rng);
    r.margin = r.l_inf - r.mc.value;
    r.holds = r.mc.value <= r.l_inf + 3.0 * r.mc.std_error;
    return r;
}

double mgf_check(double a, double mu, double sigma, std::size_t draws, Rng& rng) {
    if (draws == 0) throw ConfigError("mgf_check: draws must be >= 1");
    if (sigma < 0.0) throw ConfigError("mgf_check: sigma must be >= 0");
    const double exact = std::exp(a * mu + 0.5 * a * a * sigma);
    const double sd = std::sqrt(sigma);
    std::normal_distribution<double> normal(0.0, 1.0);
    // Running mean: exact when every draw is the same value.
    double empirical = 0.0;
    for (std::size_t m = 0; m < draws; ++m) {
        // Draw even when degenerate so the generator advances the same way.
        const double x = mu + sd * normal(rng);
        empirical += (std::exp(a * x) - empirical) / static_cast<double>(m + 1);
    }
    return std::abs(empirical - exact) / exact;
}

AuditResult finite_diff_audit(const LossEvaluator& evaluate, std::span<const double> params,
                              std::span<const double> analytic, double epsilon) {
    if (!(epsilon > 0.0)) throw ConfigError("finite_diff_audit: epsilon must be > 0");
    if (params.size() != analytic.size()) {
        throw DimensionError("finite_diff_audit: gradient length does not match parameters");
    }
    AuditResult result;
    const LossProbe base = evaluate(params);
    Vector probe(params.begin(), params.end());

    for (std::size_t k = 0; k < params.size(); ++k) {
        probe[k] = params[k] + epsilon;
        const LossProbe plus = evaluate(probe);
        probe[k] = params[k] - epsilon;
        const LossProbe minus = evaluate(probe);
        probe[k] = params[k];

        bool near_kink = false;
        for (std::size_t u = 0; u < base.rectifier_inputs.size() && !near_kink; ++u) {
            const double b = base.rectifier_inputs[u];
            const double p = plus.rectifier_inputs[u];
            const double m = minus.rectifier_inputs[u];
            if (p == b && m == b) continue;  // not moved by this parameter
            const double closest = std::min({std::abs(b), std::abs(p), std::abs(m)});
            near_kink = closest < kKinkMargin || (p > 0.0) != (b > 0.0) || (m > 0.0) != (b > 0.0);
        }
        if (near_kink) {
            ++result.skipped_near_kink;
            continue;
        }
        // The realised step (p + eps) - (p - eps) is exact in double and may
        // differ from 2 eps by rounding of the perturbed parameters.
        const long double step = static_cast<long double>((params[k] + epsilon) - (params[k] - epsilon));
        const double numeric = static_cast<double>((plus.value - minus.value) / step);
        const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-12});
        result.max_relative_error =
            std::max(result.max_relative_error, std::abs(analytic[k] - numeric) / denom);
        ++result.checked;
    }
    return result;
}

}  // namespace tsa

namespace tsa {

Vector flatten(const ModelParams& params) {
    Vector out;
    out.reserve(params.parameter_count());
    for (auto a : params.arrays()) out.insert(out.end(), a.begin(), a.end());
    return out;
}

ModelParams unflatten(const ModelParams& shape, std::span<const double> flat) {
    if (flat.size() != shape.parameter_count()) {
        throw DimensionError("unflatten: length does not match parameter count");
    }
    ModelParams out = shape;
    std::size_t pos = 0;
    for (auto a : out.arrays()) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), a.size(), a.begin());
        pos += a.size();
    }
    return out;
}

NetworkAuditCase random_audit_case(Rng& rng, std::size_t max_width) {
    if (max_width < 1) throw ConfigError("random_audit_case: max_width must be >= 1");
    std::uniform_int_distribution<std::size_t> pick_in(1, 4);
    std::uniform_int_distribution<std::size_t> pick_depth(1, 2);
    std::uniform_int_distribution<std::size_t> pick_width(1, max_width);
    std::uniform_int_distribution<std::size_t> pick_c(2, 5);
    std::uniform_real_distribution<double> pick_lambda(0.1, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    constexpr std::size_t kBatch = 6;
    auto has_dead_layer = [](const ForwardRecord& rec) {
        for (std::size_t l = 0; l + 1 < rec.activations.size(); ++l) {
            const auto v = rec.activations[l].data();
            if (std::all_of(v.begin(), v.end(), [](double a) { return a == 0.0; })) return true;
        }
        return false;
    };

    NetworkAuditCase c;
    std::size_t in = 0;
    std::size_t classes = 0;
    // A hidden layer that is zero on a whole batch makes the network constant
    // there, so the mutual-information term sits exactly at its stationary
    // point and every gradient entry is rounding noise. Redraw such networks.
    do {
        in = pick_in(rng);
        std::vector<std::size_t> widths(pick_depth(rng) + 1);
        for (auto& w : widths) w = pick_width(rng);
        classes = pick_c(rng);

        c.params = init_model(in, widths, classes, rng);
        // Non-zero biases so the bias gradients are exercised away from init.
        for (auto& l : c.params.extractor)
            for (double& b : l.bias) b = 0.1 * normal(rng);
        for (double& b : c.params.head_b) b = 0.1 * normal(rng);

        c.source_inputs = Matrix(kBatch, in);
        c.target_inputs = Matrix(kBatch, in);
        for (double& v : c.source_inputs.data()) v = normal(rng);
        for (double& v : c.target_inputs.data()) v = normal(rng);
    } while (has_dead_layer(forward(c.params, c.source_inputs)) ||
             has_dead_layer(forward(c.params, c.target_inputs)));

    std::uniform_int_distribution<int> pick_y(0, static_cast<int>(classes) - 1);
    c.source_labels.resize(kBatch);
    for (int& y : c.source_labels) y = pick_y(rng);

    const std::size_t k = c.params.feature_dim();
    c.stats.classes.resize(classes);
    for (auto& cs : c.stats.classes) {
        Matrix a(k, k);
        for (double& v : a.data()) v = normal(rng);
        cs.sigma_t = scale(matmul_transposed(a, a), 1.0 / static_cast<double>(k));
        cs.delta_mu.resize(k);
        for (double& v : cs.delta_mu) v = normal(rng);
        cs.mu_s = Vector(k, 0.0);
        cs.mu_t = cs.delta_mu;
        cs.count_s = cs.count_t = 1;
        cs.enabled = true;
    }
    c.lambda = pick_lambda(rng);
    c.beta = 0.1;
    return c;
}

namespace {

Gradients analytic_gradients(const NetworkAuditCase& c, AuditedLoss which) {
    const auto src = forward(c.params, c.source_inputs);
    const auto tgt = forward(c.params, c.target_inputs);
    if (which == AuditedLoss::mutual_information) {
        const auto mi = mi_loss(softmax(tgt.logits));
        return backward(c.params, tgt, mi.grad_logits,
                        Matrix(tgt.features.rows(), tgt.features.cols()));
    }
    const double beta = which == AuditedLoss::total ? c.beta : 0.0;
    const auto report = tsa_loss(c.params, src, c.source_labels, tgt, c.stats, c.lambda, beta);
    return tsa_gradients(c.params, src, tgt, report);
}

// Extended-precision re-implementation of the forward pass and both losses,
// written independently of network.cpp/loss.cpp. Central differences of a
// double-precision loss bottom out near ulp(L) / (2 eps) ~ 1e-11, which is
// too coarse for a relative check on small gradient entries.
using Wide = long double;
using WideMatrix = std::vector<std::vector<Wide>>;

WideMatrix wide_forward(const ModelParams& p, const Matrix& inputs, std::vector<double>& rectifier) {
    WideMatrix act(inputs.rows());
    for (std::size_t i = 0; i < inputs.rows(); ++i)
        act[i].assign(inputs.row(i).begin(), inputs.row(i).end());

    auto affine = [](const WideMatrix& in, const Matrix& w, std::span<const double> b) {
        WideMatrix out(in.size(), std::vector<Wide>(w.rows()));
        for (std::size_t i = 0; i < in.size(); ++i)
            for (std::size_t o = 0; o < w.rows(); ++o) {
                Wide s = b[o];
                for (std::size_t k = 0; k < w.cols(); ++k) s += static_cast<Wide>(w(o, k)) * in[i][k];
                out[i][o] = s;
            }
        return out;
    };
    for (std::size_t l = 0; l < p.extractor.size(); ++l) {
        act = affine(act, p.extractor[l].weight, p.extractor[l].bias);
        if (l + 1 < p.extractor.size()) {
            for (auto& row : act)
                for (auto& v : row) {
                    rectifier.push_back(static_cast<double>(v));
                    if (!(v > 0)) v = 0;
                }
        }
    }
    return affine(act, p.head_w, p.head_b);
}

Wide wide_logsumexp(const std::vector<Wide>& z) {
    Wide mx = z.front();
    for (Wide v : z) mx = std::max(mx, v);
    Wide sum = 0;
    for (Wide v : z) sum += std::exp(v - mx);
    return mx + std::log(sum);
}

Wide wide_surrogate(const NetworkAuditCase& c, const ModelParams& p, const WideMatrix& logits) {
    const std::size_t classes = p.head_w.rows();
    const std::size_t dim = p.head_w.cols();
    Wide total = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto y = static_cast<std::size_t>(c.source_labels[i]);
        const auto& cs = c.stats.classes[y];
        std::vector<Wide> z = logits[i];
        if (cs.enabled) {
            for (std::size_t k = 0; k < classes; ++k) {
                if (k == y) continue;
                std::vector<Wide> d(dim);
                for (std::size_t a = 0; a < dim; ++a)
                    d[a] = static_cast<Wide>(p.head_w(k, a)) - static_cast<Wide>(p.head_w(y, a));
                Wide shift = 0;
                Wide spread = 0;
                for (std::size_t a = 0; a < dim; ++a) {
                    shift += d[a] * cs.delta_mu[a];
                    for (std::size_t b = 0; b < dim; ++b) spread += d[a] * cs.sigma_t(a, b) * d[b];
                }
                z[k] += c.lambda * shift + c.lambda * spread / 2;
            }
        }
        total += wide_logsumexp(z) - z[y];
    }
    return total / static_cast<Wide>(logits.size());
}

Wide wide_mutual_information(const WideMatrix& logits) {
    const std::size_t n = logits.size();
    const std::size_t classes = logits.front().size();
    std::vector<Wide> marginal(classes, 0);
    Wide conditional = 0;
    for (const auto& row : logits) {
        const Wide lse = wide_logsumexp(row);
        for (std::size_t k = 0; k < classes; ++k) {
            const Wide logp = row[k] - lse;
            const Wide pk = std::exp(logp);
            marginal[k] += pk / static_cast<Wide>(n);
            conditional -= pk * logp / static_cast<Wide>(n);
        }
    }
    Wide neg_marginal = 0;
    for (Wide m : marginal)
        if (m > 0) neg_marginal += m * std::log(m);
    return neg_marginal + conditional;
}

LossProbe reference_loss(const NetworkAuditCase& c, const ModelParams& p, AuditedLoss which) {
    LossProbe probe;
    const auto src = wide_forward(p, c.source_inputs, probe.rectifier_inputs);
    const auto tgt = wide_forward(p, c.target_inputs, probe.rectifier_inputs);
    switch (which) {
        case AuditedLoss::surrogate:
            probe.value = wide_surrogate(c, p, src);
            break;
        case AuditedLoss::mutual_information:
            probe.value = wide_mutual_information(tgt);
            break;
        case AuditedLoss::total:
            probe.value = wide_surrogate(c, p, src) + c.beta * wide_mutual_information(tgt);
            break;
    }
    return probe;
}

}  // namespace

AuditResult audit_network_gradients(const NetworkAuditCase& c, AuditedLoss which, double epsilon) {
    const Vector analytic = flatten(analytic_gradients(c, which));
    const Vector start = flatten(c.params);
    const LossEvaluator eval = [&](std::span<const double> flat) {
        return reference_loss(c, unflatten(c.params, flat), which);
    };
    return finite_diff_audit(eval, start, analytic, epsilon);
}

}  // namespace tsa
