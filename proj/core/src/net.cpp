#include "moca/net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "moca/errors.hpp"

namespace moca {

namespace {

void require_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeMismatch(what);
}

void check_encoder_congruent(const std::vector<DenseLayer>& a, const std::vector<DenseLayer>& b, const char* what) {
    require_shape(a.size() == b.size(), std::string(what) + ": layer count differs");
    for (std::size_t l = 0; l < a.size(); ++l) {
        require_shape(a[l].weight.same_shape(b[l].weight) && a[l].bias.size() == b[l].bias.size(),
                      std::string(what) + ": layer " + std::to_string(l) + " shape differs");
    }
}

std::vector<DenseLayer> zero_layers_like(const std::vector<DenseLayer>& layers) {
    std::vector<DenseLayer> out;
    out.reserve(layers.size());
    for (const auto& l : layers) {
        out.push_back(DenseLayer{Matrix(l.weight.rows, l.weight.cols), std::vector<double>(l.bias.size(), 0.0)});
    }
    return out;
}

// y = W x + b
void affine(const DenseLayer& layer, std::span<const double> x, FeatureVector& y) {
    const std::size_t out = layer.out_dim(), in = layer.in_dim();
    y.resize(out);
    const double* w = layer.weight.data.data();
    for (std::size_t r = 0; r < out; ++r) {
        const double* row = w + r * in;
        double s = 0.0;
        for (std::size_t c = 0; c < in; ++c) s += row[c] * x[c];
        y[r] = s + layer.bias[r];
    }
}

FeatureVector run_forward(const ModelParams& params, std::span<const double> x, const DropoutMask* mask,
                          ForwardCache* cache) {
    if (params.encoder.empty()) throw ShapeMismatch("forward: encoder has no layers");
    require_shape(x.size() == params.input_dim(), "forward: input length " + std::to_string(x.size()) +
                                                      " does not match first layer " +
                                                      std::to_string(params.input_dim()));
    const std::size_t depth = params.encoder.size();
    if (cache != nullptr) {
        cache->inputs.assign(depth, {});
        cache->pre_activations.assign(depth - 1, {});
        cache->dropout_scale.clear();
    }
    const double keep_scale = mask != nullptr ? 1.0 / (1.0 - mask->rate) : 1.0;
    FeatureVector current(x.begin(), x.end());
    FeatureVector next;
    for (std::size_t l = 0; l < depth; ++l) {
        if (cache != nullptr) cache->inputs[l] = current;
        affine(params.encoder[l], current, next);
        if (l + 1 < depth) {
            if (cache != nullptr) cache->pre_activations[l] = next;
            std::vector<double> scale_row;
            if (mask != nullptr) scale_row.resize(next.size());
            for (std::size_t i = 0; i < next.size(); ++i) {
                double v = next[i] > 0.0 ? next[i] : 0.0;
                if (mask != nullptr) {
                    const double m = mask->keep[l][i] ? keep_scale : 0.0;
                    scale_row[i] = m;
                    v *= m;
                }
                next[i] = v;
            }
            if (cache != nullptr && mask != nullptr) cache->dropout_scale.push_back(std::move(scale_row));
        }
        std::swap(current, next);
    }
    if (cache != nullptr) cache->output = current;
    return current;
}

}  // namespace

std::size_t ModelParams::input_dim() const {
    if (encoder.empty()) throw ShapeMismatch("ModelParams: empty encoder");
    return encoder.front().in_dim();
}

std::size_t ModelParams::feature_dim() const {
    if (encoder.empty()) throw ShapeMismatch("ModelParams: empty encoder");
    return encoder.back().out_dim();
}

GradientBundle GradientBundle::zeros_like(const ModelParams& params) {
    GradientBundle g;
    g.encoder = zero_layers_like(params.encoder);
    g.classifier = Matrix(params.classifier.rows, params.classifier.cols);
    return g;
}

void GradientBundle::scale_by(double factor) {
    for (auto& l : encoder) {
        for (auto& v : l.weight.data) v *= factor;
        for (auto& v : l.bias) v *= factor;
    }
    for (auto& v : classifier.data) v *= factor;
}

void GradientBundle::add(const GradientBundle& other, double factor) {
    check_encoder_congruent(encoder, other.encoder, "GradientBundle::add");
    require_shape(classifier.same_shape(other.classifier), "GradientBundle::add: classifier shape differs");
    for (std::size_t l = 0; l < encoder.size(); ++l) {
        auto& dst = encoder[l];
        const auto& src = other.encoder[l];
        for (std::size_t i = 0; i < dst.weight.data.size(); ++i) dst.weight.data[i] += factor * src.weight.data[i];
        for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += factor * src.bias[i];
    }
    for (std::size_t i = 0; i < classifier.data.size(); ++i) classifier.data[i] += factor * other.classifier.data[i];
}

double GradientBundle::squared_norm() const {
    double s = 0.0;
    for (const auto& l : encoder) {
        for (double v : l.weight.data) s += v * v;
        for (double v : l.bias) s += v * v;
    }
    for (double v : classifier.data) s += v * v;
    return s;
}

WeightDelta WeightDelta::zeros_like(const ModelParams& params) {
    return WeightDelta{zero_layers_like(params.encoder)};
}

double WeightDelta::norm() const {
    double s = 0.0;
    for (const auto& l : encoder) {
        for (double v : l.weight.data) s += v * v;
        for (double v : l.bias) s += v * v;
    }
    return std::sqrt(s);
}

ModelParams init_params(const InitOptions& opts, RngStream& rng) {
    if (opts.input_dim == 0 || opts.feature_dim == 0 || opts.num_classes == 0) {
        throw ConfigError("init_params: dimensions must be positive");
    }
    if (!(opts.scale > 0.0)) throw ConfigError("init_params: logit scale must be positive");
    std::vector<std::size_t> dims;
    dims.push_back(opts.input_dim);
    for (auto h : opts.hidden) {
        if (h == 0) throw ConfigError("init_params: hidden width must be positive");
        dims.push_back(h);
    }
    dims.push_back(opts.feature_dim);

    ModelParams p;
    p.scale = opts.scale;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer{Matrix(dims[l + 1], dims[l]), std::vector<double>(dims[l + 1], 0.0)};
        const double bound = std::sqrt(6.0 / static_cast<double>(dims[l]));
        for (auto& w : layer.weight.data) w = (2.0 * rng.uniform() - 1.0) * bound;
        p.encoder.push_back(std::move(layer));
    }
    p.classifier = Matrix(opts.num_classes, opts.feature_dim);
    const double bound = std::sqrt(6.0 / static_cast<double>(opts.feature_dim));
    for (auto& w : p.classifier.data) w = (2.0 * rng.uniform() - 1.0) * bound;
    return p;
}

FeatureVector forward(const ModelParams& params, std::span<const double> x) {
    return run_forward(params, x, nullptr, nullptr);
}

FeatureVector forward(const ModelParams& params, std::span<const double> x, ForwardCache& cache) {
    return run_forward(params, x, nullptr, &cache);
}

DropoutMask sample_dropout_mask(const ModelParams& params, double rate, RngStream& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
    DropoutMask mask;
    mask.rate = rate;
    for (std::size_t l = 0; l + 1 < params.encoder.size(); ++l) {
        std::vector<std::uint8_t> keep(params.encoder[l].out_dim());
        for (auto& k : keep) k = rate == 0.0 ? 1 : (rng.uniform() >= rate ? 1 : 0);
        mask.keep.push_back(std::move(keep));
    }
    return mask;
}

FeatureVector forward_dropout(const ModelParams& params, std::span<const double> x, double rate, RngStream& rng,
                              ForwardCache* cache) {
    const DropoutMask mask = sample_dropout_mask(params, rate, rng);
    return run_forward(params, x, &mask, cache);
}

FeatureVector forward_masked(const ModelParams& params, std::span<const double> x, const DropoutMask& mask,
                             ForwardCache* cache) {
    require_shape(mask.keep.size() + 1 == params.encoder.size(), "forward_masked: mask depth differs from encoder");
    for (std::size_t l = 0; l < mask.keep.size(); ++l) {
        require_shape(mask.keep[l].size() == params.encoder[l].out_dim(), "forward_masked: mask width differs");
    }
    return run_forward(params, x, &mask, cache);
}

std::vector<double> cosine_logits(const ModelParams& params, std::span<const double> f) {
    require_shape(f.size() == params.classifier.cols, "cosine_logits: feature length differs from classifier");
    const UnitVector fhat = project_to_sphere(f);
    std::vector<double> logits(params.classifier.rows);
    for (std::size_t j = 0; j < logits.size(); ++j) {
        const auto w = params.classifier.row(j);
        const double wn = norm(w);
        if (!(wn > kDegenerateNorm)) throw DegenerateVector("cosine_logits: classifier row has zero norm");
        logits[j] = params.scale * dot(w, fhat.values()) / wn;
    }
    return logits;
}

namespace {

LossAndGrad cosine_ce(const ModelParams& params, std::span<const double> f, std::size_t label, double weight,
                      Matrix* classifier_grad) {
    const std::size_t k = params.classifier.rows, d = params.classifier.cols;
    require_shape(f.size() == d, "ce_loss: feature length differs from classifier");
    if (label >= k) throw ConfigError("ce_loss: label " + std::to_string(label) + " out of range");

    const double fn = norm(f);
    if (!(fn > kDegenerateNorm)) throw DegenerateVector("ce_loss: feature has zero norm");
    FeatureVector fhat(f.begin(), f.end());
    for (auto& v : fhat) v /= fn;

    std::vector<double> wnorm(k), cosines(k);
    for (std::size_t j = 0; j < k; ++j) {
        const auto w = params.classifier.row(j);
        wnorm[j] = norm(w);
        if (!(wnorm[j] > kDegenerateNorm)) throw DegenerateVector("ce_loss: classifier row has zero norm");
        cosines[j] = dot(w, fhat) / wnorm[j];
    }
    double max_logit = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) max_logit = std::max(max_logit, params.scale * cosines[j]);
    std::vector<double> prob(k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        prob[j] = std::exp(params.scale * cosines[j] - max_logit);
        z += prob[j];
    }
    for (auto& p : prob) p /= z;

    LossAndGrad out;
    out.loss = -(params.scale * cosines[label] - max_logit - std::log(z));

    // g_j = ∂L/∂logit_j = p_j - [j = y]
    std::vector<double> g(prob);
    g[label] -= 1.0;

    // ∂L/∂f̂ = s Σ_j g_j ŵ_j ; ∂L/∂f = (I - f̂f̂ᵀ) ∂L/∂f̂ / ‖f‖
    FeatureVector grad_hat(d, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        const double coef = params.scale * g[j] / wnorm[j];
        const auto w = params.classifier.row(j);
        for (std::size_t i = 0; i < d; ++i) grad_hat[i] += coef * w[i];
    }
    const double radial = dot(grad_hat, fhat);
    out.grad_feature.resize(d);
    for (std::size_t i = 0; i < d; ++i) out.grad_feature[i] = weight * (grad_hat[i] - radial * fhat[i]) / fn;

    if (classifier_grad != nullptr) {
        require_shape(classifier_grad->same_shape(params.classifier), "ce_loss: classifier gradient shape differs");
        // ∂L/∂w_j = s g_j (f̂ - cos_j ŵ_j) / ‖w_j‖
        for (std::size_t j = 0; j < k; ++j) {
            const double coef = weight * params.scale * g[j] / wnorm[j];
            if (coef == 0.0) continue;
            const auto w = params.classifier.row(j);
            auto dst = classifier_grad->row(j);
            for (std::size_t i = 0; i < d; ++i) dst[i] += coef * (fhat[i] - cosines[j] * w[i] / wnorm[j]);
        }
    }
    return out;
}

}  // namespace

LossAndGrad ce_loss_and_feature_grad(const ModelParams& params, std::span<const double> f, std::size_t label) {
    return cosine_ce(params, f, label, 1.0, nullptr);
}

LossAndGrad ce_loss_and_grads(const ModelParams& params, std::span<const double> f, std::size_t label,
                              double weight, Matrix& classifier_grad) {
    return cosine_ce(params, f, label, weight, &classifier_grad);
}

void accumulate_backward(const ModelParams& params, const ForwardCache& cache, std::span<const double> grad_feature,
                         GradientBundle& out) {
    const std::size_t depth = params.encoder.size();
    if (cache.inputs.size() != depth || cache.pre_activations.size() + 1 != depth ||
        (!cache.dropout_scale.empty() && cache.dropout_scale.size() + 1 != depth)) {
        throw StaleCache("backward: cache depth does not match the encoder");
    }
    if (out.encoder.size() != depth) throw ShapeMismatch("backward: gradient bundle depth differs");
    for (std::size_t l = 0; l < depth; ++l) {
        if (cache.inputs[l].size() != params.encoder[l].in_dim()) {
            throw StaleCache("backward: cached input width differs at layer " + std::to_string(l));
        }
        if (l + 1 < depth && cache.pre_activations[l].size() != params.encoder[l].out_dim()) {
            throw StaleCache("backward: cached activation width differs at layer " + std::to_string(l));
        }
    }
    if (grad_feature.size() != params.feature_dim()) throw ShapeMismatch("backward: feature gradient length differs");

    FeatureVector delta(grad_feature.begin(), grad_feature.end());
    FeatureVector prev;
    for (std::size_t li = depth; li-- > 0;) {
        const DenseLayer& layer = params.encoder[li];
        DenseLayer& grad = out.encoder[li];
        const FeatureVector& input = cache.inputs[li];
        const std::size_t rows = layer.out_dim(), cols = layer.in_dim();
        for (std::size_t r = 0; r < rows; ++r) {
            const double d = delta[r];
            if (d == 0.0) continue;
            grad.bias[r] += d;
            double* g = grad.weight.data.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) g[c] += d * input[c];
        }
        if (li == 0) break;
        prev.assign(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double d = delta[r];
            if (d == 0.0) continue;
            const double* w = layer.weight.data.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) prev[c] += d * w[c];
        }
        // Through dropout scale and ReLU of layer li-1.
        const FeatureVector& pre = cache.pre_activations[li - 1];
        const bool has_dropout = !cache.dropout_scale.empty();
        for (std::size_t c = 0; c < cols; ++c) {
            double v = pre[c] > 0.0 ? prev[c] : 0.0;
            if (has_dropout) v *= cache.dropout_scale[li - 1][c];
            prev[c] = v;
        }
        std::swap(delta, prev);
    }
}

GradientBundle backward_from_feature_grad(const ModelParams& params, const ForwardCache& cache,
                                          std::span<const double> grad_feature) {
    GradientBundle g = GradientBundle::zeros_like(params);
    accumulate_backward(params, cache, grad_feature, g);
    return g;
}

ModelParams apply_weight_delta(const ModelParams& params, const WeightDelta& delta) {
    check_encoder_congruent(params.encoder, delta.encoder, "apply_weight_delta");
    ModelParams out = params;
    for (std::size_t l = 0; l < out.encoder.size(); ++l) {
        auto& dst = out.encoder[l];
        const auto& src = delta.encoder[l];
        for (std::size_t i = 0; i < dst.weight.data.size(); ++i) dst.weight.data[i] += src.weight.data[i];
        for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += src.bias[i];
    }
    return out;
}

WeightDelta l2_ball_project(WeightDelta delta, double radius) {
    if (!(radius > 0.0)) throw ConfigError("l2_ball_project: radius must be positive");
    const double n = delta.norm();
    if (n > radius) {
        const double f = radius / n;
        for (auto& l : delta.encoder) {
            for (auto& v : l.weight.data) v *= f;
            for (auto& v : l.bias) v *= f;
        }
    }
    return delta;
}

void sgd_step_inplace(ModelParams& params, const GradientBundle& grads, double lr) {
    check_encoder_congruent(params.encoder, grads.encoder, "sgd_step");
    require_shape(params.classifier.same_shape(grads.classifier), "sgd_step: classifier shape differs");
    for (std::size_t l = 0; l < params.encoder.size(); ++l) {
        auto& dst = params.encoder[l];
        const auto& g = grads.encoder[l];
        for (std::size_t i = 0; i < dst.weight.data.size(); ++i) dst.weight.data[i] -= lr * g.weight.data[i];
        for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] -= lr * g.bias[i];
    }
    for (std::size_t i = 0; i < params.classifier.data.size(); ++i) {
        params.classifier.data[i] -= lr * grads.classifier.data[i];
    }
}

ModelParams sgd_step(const ModelParams& params, const GradientBundle& grads, double lr) {
    ModelParams out = params;
    sgd_step_inplace(out, grads, lr);
    return out;
}

}  // namespace moca
