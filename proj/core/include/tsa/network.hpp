#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tsa/linalg.hpp"

namespace tsa {

struct DenseLayer {
    Matrix weight;  // out x in
    Vector bias;    // out

    bool operator==(const DenseLayer&) const = default;
};

// Feature extractor (dense layers with a rectifier between consecutive
// layers; the last layer's output is the feature vector, not rectified)
// followed by a linear classification head.
struct ModelParams {
    std::vector<DenseLayer> extractor;
    Matrix head_w;  // C x K
    Vector head_b;  // C

    std::size_t input_dim() const noexcept;
    std::size_t feature_dim() const noexcept;
    std::size_t class_count() const noexcept { return head_w.rows(); }
    std::size_t parameter_count() const noexcept;

    // Throws DimensionError if the layer shapes do not chain.
    void validate() const;

    // Same shapes, all zeros.
    ModelParams zeros_like() const;

    // Every parameter array in a fixed order: layer weights and biases from
    // input to output, then head weights, then head bias.
    std::vector<std::span<double>> arrays();
    std::vector<std::span<const double>> arrays() const;

    bool operator==(const ModelParams&) const = default;
};

using Gradients = ModelParams;

// Zero biases, weights ~ N(0, 2 / fan_in). `widths` lists the extractor
// layer output sizes; its last entry is the feature dimension K.
ModelParams init_model(std::size_t input_dim, std::span<const std::size_t> widths,
                       std::size_t class_count, Rng& rng);

struct ForwardRecord {
    Matrix inputs;
    std::vector<Matrix> pre_activations;  // one per extractor layer
    std::vector<Matrix> activations;      // rectified, except the last layer
    Matrix features;                      // batch x K
    Matrix logits;                        // batch x C
};

ForwardRecord forward(const ModelParams& params, const Matrix& inputs);

// Row-wise softmax with per-row max subtraction.
Matrix softmax(const Matrix& logits);

// Per-row argmax, ties to the lowest index. Applied to target softmax
// outputs this is the pseudo-labeling rule.
std::vector<int> pseudo_label(const Matrix& probs);

// Gradients of a loss whose partial derivatives w.r.t. the logits and
// features of `record` are given. grad_features is added to the gradient
// arriving at the feature layer through the head.
Gradients backward(const ModelParams& params, const ForwardRecord& record,
                   const Matrix& grad_logits, const Matrix& grad_features);

// a += b, shapes must agree.
void accumulate(Gradients& into, const Gradients& other);

struct OptimizerState {
    Gradients velocity;
    double learning_rate = 0.05;
    double momentum = 0.9;
};

OptimizerState make_optimizer(const ModelParams& params, double learning_rate, double momentum);

// velocity <- momentum * velocity + grad; param <- param - lr * velocity.
void sgd_step(ModelParams& params, const Gradients& grads, OptimizerState& state);

// Decimal-text checkpoint; see docs/checkpoint-format.md.
std::string serialize_model(const ModelParams& params);
ModelParams parse_model(const std::string& text);
void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace tsa
