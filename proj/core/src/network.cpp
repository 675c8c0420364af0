#include "tsa/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsa/errors.hpp"

namespace tsa {

std::size_t ModelParams::input_dim() const noexcept {
    return extractor.empty() ? head_w.cols() : extractor.front().weight.cols();
}

std::size_t ModelParams::feature_dim() const noexcept {
    return extractor.empty() ? head_w.cols() : extractor.back().weight.rows();
}

std::size_t ModelParams::parameter_count() const noexcept {
    std::size_t n = head_w.size() + head_b.size();
    for (const auto& l : extractor) n += l.weight.size() + l.bias.size();
    return n;
}

void ModelParams::validate() const {
    std::size_t width = input_dim();
    for (std::size_t i = 0; i < extractor.size(); ++i) {
        const auto& l = extractor[i];
        if (l.weight.cols() != width || l.bias.size() != l.weight.rows()) {
            throw DimensionError("model: extractor layer " + std::to_string(i) +
                                 " does not chain");
        }
        width = l.weight.rows();
    }
    if (head_w.cols() != width || head_b.size() != head_w.rows()) {
        throw DimensionError("model: head shape does not match feature width");
    }
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z;
    for (const auto& l : extractor) {
        z.extractor.push_back({Matrix(l.weight.rows(), l.weight.cols()), Vector(l.bias.size())});
    }
    z.head_w = Matrix(head_w.rows(), head_w.cols());
    z.head_b = Vector(head_b.size());
    return z;
}

std::vector<std::span<double>> ModelParams::arrays() {
    std::vector<std::span<double>> out;
    for (auto& l : extractor) {
        out.push_back(l.weight.data());
        out.push_back(l.bias);
    }
    out.push_back(head_w.data());
    out.push_back(head_b);
    return out;
}

std::vector<std::span<const double>> ModelParams::arrays() const {
    std::vector<std::span<const double>> out;
    for (const auto& l : extractor) {
        out.push_back(l.weight.data());
        out.push_back(l.bias);
    }
    out.push_back(head_w.data());
    out.push_back(head_b);
    return out;
}

ModelParams init_model(std::size_t input_dim, std::span<const std::size_t> widths,
                       std::size_t class_count, Rng& rng) {
    if (input_dim == 0 || class_count == 0) throw ConfigError("init_model: zero dimension");
    ModelParams p;
    std::size_t fan_in = input_dim;
    auto gaussian = [&](std::size_t rows, std::size_t cols) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(cols)));
        Matrix m(rows, cols);
        for (double& v : m.data()) v = dist(rng);
        return m;
    };
    for (std::size_t w : widths) {
        if (w == 0) throw ConfigError("init_model: zero layer width");
        p.extractor.push_back({gaussian(w, fan_in), Vector(w, 0.0)});
        fan_in = w;
    }
    p.head_w = gaussian(class_count, fan_in);
    p.head_b = Vector(class_count, 0.0);
    return p;
}

namespace {

// out = in * W^T + b, row by row.
Matrix affine(const Matrix& in, const Matrix& weight, std::span<const double> bias) {
    Matrix out = matmul_transposed(in, weight);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
    return out;
}

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw DimensionError(std::string("backward: ") + what + " has shape " +
                             std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                             ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

}  // namespace

ForwardRecord forward(const ModelParams& params, const Matrix& inputs) {
    if (inputs.cols() != params.input_dim()) {
        throw DimensionError("forward: input width " + std::to_string(inputs.cols()) +
                             " does not match model input " +
                             std::to_string(params.input_dim()));
    }
    ForwardRecord rec;
    rec.inputs = inputs;
    const Matrix* current = &rec.inputs;
    const std::size_t n_layers = params.extractor.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& layer = params.extractor[l];
        rec.pre_activations.push_back(affine(*current, layer.weight, layer.bias));
        Matrix act = rec.pre_activations.back();
        if (l + 1 < n_layers) {
            for (double& v : act.data()) v = v > 0.0 ? v : 0.0;
        }
        rec.activations.push_back(std::move(act));
        current = &rec.activations.back();
    }
    rec.features = *current;
    rec.logits = affine(rec.features, params.head_w, params.head_b);
    return rec;
}

Matrix softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto in = logits.row(r);
        auto o = out.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        for (double& v : o) v /= sum;
    }
    return out;
}

std::vector<int> pseudo_label(const Matrix& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const auto row = probs.row(r);
        // max_element returns the first maximum.
        out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

Gradients backward(const ModelParams& params, const ForwardRecord& record,
                   const Matrix& grad_logits, const Matrix& grad_features) {
    const std::size_t batch = record.inputs.rows();
    require_shape(grad_logits, batch, params.class_count(), "grad_logits");
    require_shape(grad_features, batch, params.feature_dim(), "grad_features");
    require_shape(record.logits, batch, params.class_count(), "record logits");
    if (record.pre_activations.size() != params.extractor.size()) {
        throw DimensionError("backward: record does not match model depth");
    }

    Gradients g = params.zeros_like();
    for (std::size_t i = 0; i < batch; ++i) {
        add_outer(g.head_w, grad_logits.row(i), record.features.row(i), 1.0);
        const auto gl = grad_logits.row(i);
        for (std::size_t c = 0; c < gl.size(); ++c) g.head_b[c] += gl[c];
    }

    // Gradient at the feature layer: head path plus the injected term.
    Matrix upstream = add(matmul(grad_logits, params.head_w), grad_features);

    for (std::size_t l = params.extractor.size(); l-- > 0;) {
        const auto& layer = params.extractor[l];
        const bool rectified = l + 1 < params.extractor.size();
        Matrix grad_pre = upstream;
        if (rectified) {
            const auto pre = record.pre_activations[l].data();
            auto gp = grad_pre.data();
            for (std::size_t k = 0; k < gp.size(); ++k)
                if (!(pre[k] > 0.0)) gp[k] = 0.0;
        }
        const Matrix& layer_in = l == 0 ? record.inputs : record.activations[l - 1];
        for (std::size_t i = 0; i < batch; ++i) {
            add_outer(g.extractor[l].weight, grad_pre.row(i), layer_in.row(i), 1.0);
            const auto gp = grad_pre.row(i);
            for (std::size_t k = 0; k < gp.size(); ++k) g.extractor[l].bias[k] += gp[k];
        }
        if (l > 0) upstream = matmul(grad_pre, layer.weight);
    }
    return g;
}

void accumulate(Gradients& into, const Gradients& other) {
    auto dst = into.arrays();
    const auto src = other.arrays();
    if (dst.size() != src.size()) throw DimensionError("accumulate: structure mismatch");
    for (std::size_t a = 0; a < dst.size(); ++a) {
        if (dst[a].size() != src[a].size()) throw DimensionError("accumulate: shape mismatch");
        for (std::size_t k = 0; k < dst[a].size(); ++k) dst[a][k] += src[a][k];
    }
}

OptimizerState make_optimizer(const ModelParams& params, double learning_rate, double momentum) {
    return OptimizerState{params.zeros_like(), learning_rate, momentum};
}

void sgd_step(ModelParams& params, const Gradients& grads, OptimizerState& state) {
    auto p = params.arrays();
    const auto g = grads.arrays();
    auto v = state.velocity.arrays();
    if (p.size() != g.size() || p.size() != v.size()) {
        throw DimensionError("sgd_step: structure mismatch");
    }
    for (std::size_t a = 0; a < p.size(); ++a) {
        if (p[a].size() != g[a].size() || p[a].size() != v[a].size()) {
            throw DimensionError("sgd_step: shape mismatch");
        }
        for (std::size_t k = 0; k < p[a].size(); ++k) {
            v[a][k] = state.momentum * v[a][k] + g[a][k];
            p[a][k] -= state.learning_rate * v[a][k];
        }
    }
}

}  // namespace tsa
