#include "moca/perturb.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "moca/errors.hpp"

namespace moca {

namespace {

bool identity_shortcut(const PerturberConfig& cfg) { return !cfg.fixed_angle && cfg.lambda == 0.0; }

const std::vector<FeatureVector>& new_batch_features(PerturbContext& ctx) {
    if (ctx.new_features.size() != ctx.new_batch.size()) {
        ctx.new_features.clear();
        for (const Example* ex : ctx.new_batch) ctx.new_features.push_back(forward(ctx.model, ex->input));
    }
    return ctx.new_features;
}

}  // namespace

FeatureVector compose(std::span<const double> h_old, const UnitVector& eps, const PerturberConfig& cfg) {
    if (cfg.fixed_angle) return rotate_to_angle(h_old, eps.values(), *cfg.fixed_angle);
    return hyperspherical_perturb(h_old, eps, cfg.lambda);
}

FeatureVector compose_vjp(std::span<const double> h_old, const UnitVector& eps, const PerturberConfig& cfg,
                          std::span<const double> grad) {
    if (cfg.fixed_angle) return rotate_to_angle_vjp(h_old, eps.values(), *cfg.fixed_angle, grad);
    return hyperspherical_perturb_vjp(h_old, eps, cfg.lambda, grad);
}

UnitVector gaussian_direction(std::size_t d, RngStream& rng) { return sample_uniform_sphere(d, rng); }

UnitVector vmf_direction(std::span<const double> h_old, double kappa, RngStream& rng) {
    return sample_vmf(VmfParams{project_to_sphere(h_old), kappa}, rng);
}

UnitVector doa_direction(const ModelParams& model, std::span<const double> x_source, double rate, RngStream& rng) {
    const FeatureVector f = forward_dropout(model, x_source, rate, rng);
    if (!(norm(f) > kDegenerateNorm)) throw DegenerateVector("DOA: dropout feature vanished");
    return project_to_sphere(f);
}

UnitVector vt_direction(PerturbContext& ctx) {
    if (ctx.new_batch.empty()) throw DegenerateDeviation("VT: new batch is empty");
    std::map<std::size_t, std::size_t> class_count;
    for (const Example* ex : ctx.new_batch) ++class_count[ex->label];
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < ctx.new_batch.size(); ++i) {
        if (class_count[ctx.new_batch[i]->label] >= 2) eligible.push_back(i);
    }
    if (eligible.empty()) {
        throw DegenerateDeviation("VT: no class in the new batch has two examples; deviation is zero");
    }
    const std::size_t pick = eligible[ctx.rng.uniform_index(eligible.size())];
    const std::size_t label = ctx.new_batch[pick]->label;
    const auto& feats = new_batch_features(ctx);
    const std::size_t d = feats[pick].size();
    FeatureVector mean(d, 0.0);
    double count = 0.0;
    for (std::size_t i = 0; i < ctx.new_batch.size(); ++i) {
        if (ctx.new_batch[i]->label != label) continue;
        for (std::size_t c = 0; c < d; ++c) mean[c] += feats[i][c];
        count += 1.0;
    }
    FeatureVector dev(d);
    for (std::size_t c = 0; c < d; ++c) dev[c] = feats[pick][c] - mean[c] / count;
    if (!(norm(dev) > kDegenerateNorm)) {
        throw DegenerateDeviation("VT: class-conditional deviation vanished for class " + std::to_string(label));
    }
    return project_to_sphere(dev);
}

UnitVector wap_direction(const ModelParams& model, const WeightDelta& delta, std::span<const double> x_old) {
    const ModelParams adv = apply_weight_delta(model, delta);
    return project_to_sphere(forward(adv, x_old));
}

FeatureVector perturb_gaussian(std::span<const double> h_old, const PerturberConfig& cfg, RngStream& rng) {
    if (identity_shortcut(cfg)) return FeatureVector(h_old.begin(), h_old.end());
    return compose(h_old, gaussian_direction(h_old.size(), rng), cfg);
}

FeatureVector perturb_vmf(std::span<const double> h_old, const PerturberConfig& cfg, RngStream& rng) {
    if (identity_shortcut(cfg)) return FeatureVector(h_old.begin(), h_old.end());
    if (!cfg.kappa) throw ConfigError("perturb_vmf: kappa is required");
    return compose(h_old, vmf_direction(h_old, *cfg.kappa, rng), cfg);
}

FeatureVector perturb_doa(std::span<const double> h_old, std::span<const double> x_source, const PerturberConfig& cfg,
                          PerturbContext& ctx) {
    if (identity_shortcut(cfg)) return FeatureVector(h_old.begin(), h_old.end());
    return compose(h_old, doa_direction(ctx.model, x_source, cfg.dropout_rate, ctx.dropout_rng), cfg);
}

FeatureVector perturb_vt(std::span<const double> h_old, PerturbContext& ctx, const PerturberConfig& cfg) {
    if (identity_shortcut(cfg)) return FeatureVector(h_old.begin(), h_old.end());
    return compose(h_old, vt_direction(ctx), cfg);
}

double adversarial_loss(const ModelParams& model, const WeightDelta& delta, std::span<const Example* const> old_batch,
                        std::span<const std::size_t> labels) {
    if (old_batch.size() != labels.size()) throw ShapeMismatch("adversarial_loss: labels do not match batch");
    if (old_batch.empty()) return 0.0;
    const ModelParams adv = apply_weight_delta(model, delta);
    double total = 0.0;
    for (std::size_t i = 0; i < old_batch.size(); ++i) {
        total += ce_loss_and_feature_grad(adv, forward(adv, old_batch[i]->input), labels[i]).loss;
    }
    return total / static_cast<double>(old_batch.size());
}

WapInner wap_inner_detailed(PerturbContext& ctx, const PerturberConfig& cfg) {
    if (ctx.old_batch.empty()) throw ConfigError("WAP: old batch is empty");
    if (ctx.new_batch.empty()) throw ConfigError("WAP: new batch is empty");
    std::vector<std::size_t> new_labels;
    for (const Example* ex : ctx.new_batch) new_labels.push_back(ex->label);
    std::sort(new_labels.begin(), new_labels.end());
    new_labels.erase(std::unique(new_labels.begin(), new_labels.end()), new_labels.end());

    const std::size_t m = ctx.old_batch.size();
    WapInner out{WeightDelta::zeros_like(ctx.model), std::vector<std::size_t>(m)};
    ForwardCache cache;
    for (std::size_t t = 0; t < cfg.inner_steps; ++t) {
        for (auto& y : out.adversarial_labels) y = new_labels[ctx.rng.uniform_index(new_labels.size())];
        const ModelParams adv = apply_weight_delta(ctx.model, out.delta);
        GradientBundle grad = GradientBundle::zeros_like(adv);
        for (std::size_t i = 0; i < m; ++i) {
            const FeatureVector f = forward(adv, ctx.old_batch[i]->input, cache);
            const LossAndGrad lg = ce_loss_and_feature_grad(adv, f, out.adversarial_labels[i]);
            accumulate_backward(adv, cache, lg.grad_feature, grad);
        }
        const double step = cfg.zeta * cfg.proxy_loss_weight / static_cast<double>(m);
        for (std::size_t l = 0; l < out.delta.encoder.size(); ++l) {
            auto& dst = out.delta.encoder[l];
            const auto& g = grad.encoder[l];
            for (std::size_t i = 0; i < dst.weight.data.size(); ++i) dst.weight.data[i] -= step * g.weight.data[i];
            for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] -= step * g.bias[i];
        }
        out.delta = l2_ball_project(std::move(out.delta), cfg.ball_radius);
    }
    return out;
}

WeightDelta wap_inner(PerturbContext& ctx, const PerturberConfig& cfg) { return wap_inner_detailed(ctx, cfg).delta; }

FeatureVector perturb_wap(std::span<const double> h_old, std::span<const double> x_old, const WeightDelta& delta,
                          PerturbContext& ctx, const PerturberConfig& cfg) {
    if (identity_shortcut(cfg)) return FeatureVector(h_old.begin(), h_old.end());
    return compose(h_old, wap_direction(ctx.model, delta, x_old), cfg);
}

FeatureVector project_to_fixed_angle(std::span<const double> h_old, std::span<const double> f_perturbed,
                                     double angle_deg) {
    return rotate_to_angle(h_old, f_perturbed, angle_deg);
}

std::vector<Perturbed> perturb_batch(const PerturberConfig& cfg, PerturbContext& ctx,
                                     std::span<const FeatureVector> old_features) {
    if (old_features.size() != ctx.old_batch.size()) {
        throw ShapeMismatch("perturb_batch: feature count differs from old batch");
    }
    std::vector<Perturbed> out;
    out.reserve(old_features.size());
    if (!cfg.active()) {
        for (const auto& h : old_features) out.push_back({h, project_to_sphere(h)});
        return out;
    }

    std::optional<WeightDelta> delta;
    std::optional<ModelParams> adversarial;
    if (cfg.variant == Variant::wap) {
        delta = wap_inner(ctx, cfg);
        adversarial = apply_weight_delta(ctx.model, *delta);
    }
    for (std::size_t i = 0; i < old_features.size(); ++i) {
        const FeatureVector& h = old_features[i];
        const Example& ex = *ctx.old_batch[i];
        UnitVector eps;
        switch (cfg.variant) {
            case Variant::gaussian: eps = gaussian_direction(h.size(), ctx.rng); break;
            case Variant::vmf: eps = vmf_direction(h, *cfg.kappa, ctx.rng); break;
            case Variant::doa_old: eps = doa_direction(ctx.model, ex.input, cfg.dropout_rate, ctx.dropout_rng); break;
            case Variant::doa_new: {
                if (ctx.new_batch.empty()) throw ConfigError("DOA-new: new batch is empty");
                const Example* src = ctx.new_batch[ctx.rng.uniform_index(ctx.new_batch.size())];
                eps = doa_direction(ctx.model, src->input, cfg.dropout_rate, ctx.dropout_rng);
                break;
            }
            case Variant::vt: eps = vt_direction(ctx); break;
            case Variant::wap: eps = project_to_sphere(forward(*adversarial, ex.input)); break;
            case Variant::none: break;
        }
        out.push_back({compose(h, eps, cfg), std::move(eps)});
    }
    return out;
}

std::vector<Perturbed> perturb_proxies(const PerturberConfig& cfg, PerturbContext& ctx,
                                       std::span<const FeatureVector> proxy_features) {
    if (cfg.variant == Variant::wap || cfg.variant == Variant::doa_old) {
        throw ConfigError("variant " + std::string(to_string(cfg.variant)) + " cannot perturb stored class means");
    }
    std::vector<Perturbed> out;
    out.reserve(proxy_features.size());
    if (!cfg.active()) {
        for (const auto& h : proxy_features) out.push_back({h, project_to_sphere(h)});
        return out;
    }
    for (const auto& h : proxy_features) {
        UnitVector eps;
        switch (cfg.variant) {
            case Variant::gaussian: eps = gaussian_direction(h.size(), ctx.rng); break;
            case Variant::vmf: eps = vmf_direction(h, *cfg.kappa, ctx.rng); break;
            case Variant::doa_new: {
                if (ctx.new_batch.empty()) throw ConfigError("DOA-new: new batch is empty");
                const Example* src = ctx.new_batch[ctx.rng.uniform_index(ctx.new_batch.size())];
                eps = doa_direction(ctx.model, src->input, cfg.dropout_rate, ctx.dropout_rng);
                break;
            }
            case Variant::vt: eps = vt_direction(ctx); break;
            default: break;
        }
        out.push_back({compose(h, eps, cfg), std::move(eps)});
    }
    return out;
}

}  // namespace moca
