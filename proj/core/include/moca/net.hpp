#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "moca/geometry.hpp"
#include "moca/randkit.hpp"

namespace moca {

// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
    std::span<double> row(std::size_t r) noexcept { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data.data() + r * cols, cols}; }

    bool same_shape(const Matrix& o) const noexcept { return rows == o.rows && cols == o.cols; }
    friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct DenseLayer {
    Matrix weight;  // [out × in]
    std::vector<double> bias;

    std::size_t in_dim() const noexcept { return weight.cols; }
    std::size_t out_dim() const noexcept { return weight.rows; }
    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Encoder: affine layers with ReLU between them and none after the last.
// Classifier: cosine logits s·⟨P_S(w_j), P_S(f)⟩.
struct ModelParams {
    std::vector<DenseLayer> encoder;
    Matrix classifier;  // [k × d_f]
    double scale = 10.0;

    std::size_t input_dim() const;
    std::size_t feature_dim() const;
    std::size_t num_classes() const noexcept { return classifier.rows; }
    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Shape-congruent with ModelParams.
struct GradientBundle {
    std::vector<DenseLayer> encoder;
    Matrix classifier;

    static GradientBundle zeros_like(const ModelParams& params);
    void scale_by(double factor);
    void add(const GradientBundle& other, double factor = 1.0);
    double squared_norm() const;
};

// Additive perturbation of the encoder only.
struct WeightDelta {
    std::vector<DenseLayer> encoder;

    static WeightDelta zeros_like(const ModelParams& params);
    double norm() const;
};

struct DropoutMask {
    double rate = 0.0;
    // One entry per hidden layer; 0 = dropped, 1 = kept.
    std::vector<std::vector<std::uint8_t>> keep;
};

// Activations recorded by a forward pass, consumed by backward.
struct ForwardCache {
    // inputs[l] is the input to encoder layer l (after ReLU and dropout of the
    // previous layer).
    std::vector<FeatureVector> inputs;
    // pre_activations[l] for every layer except the last.
    std::vector<FeatureVector> pre_activations;
    // Per hidden layer multiplier applied after ReLU (0 or 1/(1-rate)); empty
    // for a plain forward pass.
    std::vector<std::vector<double>> dropout_scale;
    FeatureVector output;
};

struct InitOptions {
    std::size_t input_dim = 32;
    std::vector<std::size_t> hidden = {256, 256};
    std::size_t feature_dim = 64;
    std::size_t num_classes = 10;
    double scale = 10.0;
};

// He-style uniform fan-in initialization: U(-√(6/fan_in), √(6/fan_in)),
// zero biases.
ModelParams init_params(const InitOptions& opts, RngStream& rng);

FeatureVector forward(const ModelParams& params, std::span<const double> x);
FeatureVector forward(const ModelParams& params, std::span<const double> x, ForwardCache& cache);

DropoutMask sample_dropout_mask(const ModelParams& params, double rate, RngStream& rng);

// Inverted dropout on every hidden layer; the mask is drawn from rng.
FeatureVector forward_dropout(const ModelParams& params, std::span<const double> x, double rate, RngStream& rng,
                              ForwardCache* cache = nullptr);
FeatureVector forward_masked(const ModelParams& params, std::span<const double> x, const DropoutMask& mask,
                             ForwardCache* cache = nullptr);

std::vector<double> cosine_logits(const ModelParams& params, std::span<const double> f);

struct LossAndGrad {
    double loss = 0.0;
    FeatureVector grad_feature;
};

// Cross-entropy over cosine logits and its exact gradient with respect to f
// (through the normalization of f).
LossAndGrad ce_loss_and_feature_grad(const ModelParams& params, std::span<const double> f, std::size_t label);

// Same loss; additionally adds weight·∂L/∂classifier into classifier_grad.
// The returned feature gradient is also multiplied by weight.
LossAndGrad ce_loss_and_grads(const ModelParams& params, std::span<const double> f, std::size_t label,
                              double weight, Matrix& classifier_grad);

// Reverse-mode gradients of the encoder for a gradient injected at the
// feature layer. Classifier entries of the returned bundle are zero.
GradientBundle backward_from_feature_grad(const ModelParams& params, const ForwardCache& cache,
                                          std::span<const double> grad_feature);

// Accumulates into an existing bundle (encoder part only).
void accumulate_backward(const ModelParams& params, const ForwardCache& cache, std::span<const double> grad_feature,
                         GradientBundle& out);

ModelParams apply_weight_delta(const ModelParams& params, const WeightDelta& delta);

// Radial projection onto the flattened-L2 ball.
WeightDelta l2_ball_project(WeightDelta delta, double radius);

ModelParams sgd_step(const ModelParams& params, const GradientBundle& grads, double lr);
void sgd_step_inplace(ModelParams& params, const GradientBundle& grads, double lr);

}  // namespace moca
