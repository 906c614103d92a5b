#pragma once

#include <span>
#include <vector>

#include "moca/config.hpp"
#include "moca/data.hpp"
#include "moca/geometry.hpp"
#include "moca/net.hpp"
#include "moca/randkit.hpp"

namespace moca {

// Inputs a perturbation may read. The model is never modified.
struct PerturbContext {
    const ModelParams& model;
    std::vector<const Example*> old_batch;
    std::vector<const Example*> new_batch;
    // h(x) for new_batch under `model`, if already computed; recomputed when
    // empty.
    std::vector<FeatureVector> new_features;
    RngStream& rng;          // directions, example choices, WAP labels
    RngStream& dropout_rng;  // dropout masks
};

// The augmented feature together with the unit direction ε that produced
// it. Backprop treats ε as a constant.
struct Perturbed {
    FeatureVector feature;
    UnitVector direction;
};

// Combines a prototype feature with a unit direction: the hyperspherical
// composition with λ, or the fixed-angle rotation when cfg.fixed_angle is
// set.
FeatureVector compose(std::span<const double> h_old, const UnitVector& eps, const PerturberConfig& cfg);
// (∂compose/∂h_old)ᵀ · grad with eps held constant.
FeatureVector compose_vjp(std::span<const double> h_old, const UnitVector& eps, const PerturberConfig& cfg,
                          std::span<const double> grad);

FeatureVector perturb_gaussian(std::span<const double> h_old, const PerturberConfig& cfg, RngStream& rng);
FeatureVector perturb_vmf(std::span<const double> h_old, const PerturberConfig& cfg, RngStream& rng);
// ε = P_S(h_Dropout(θ)(x_source)); x_source is the prototype itself for
// doa_old or a new-task example for doa_new.
FeatureVector perturb_doa(std::span<const double> h_old, std::span<const double> x_source, const PerturberConfig& cfg,
                          PerturbContext& ctx);
// ε = P_S(h(x_new) - mean of h over same-class examples in the new batch).
FeatureVector perturb_vt(std::span<const double> h_old, PerturbContext& ctx, const PerturberConfig& cfg);

struct WapInner {
    WeightDelta delta;
    // Adversarial labels of the last inner iteration, aligned with old_batch.
    std::vector<std::size_t> adversarial_labels;
};

// Projected gradient descent on the encoder delta towards confusing old
// prototypes with new-task labels.
WapInner wap_inner_detailed(PerturbContext& ctx, const PerturberConfig& cfg);
WeightDelta wap_inner(PerturbContext& ctx, const PerturberConfig& cfg);

// Mean CE of old_batch under θ + delta for the given labels.
double adversarial_loss(const ModelParams& model, const WeightDelta& delta, std::span<const Example* const> old_batch,
                        std::span<const std::size_t> labels);

FeatureVector perturb_wap(std::span<const double> h_old, std::span<const double> x_old, const WeightDelta& delta,
                          PerturbContext& ctx, const PerturberConfig& cfg);

// Rotates h_old so its angle to the result equals angle_deg, in the plane of
// h_old and f_perturbed.
FeatureVector project_to_fixed_angle(std::span<const double> h_old, std::span<const double> f_perturbed,
                                     double angle_deg);

// Direction samplers shared by the per-variant functions and the batch path.
UnitVector gaussian_direction(std::size_t d, RngStream& rng);
UnitVector vmf_direction(std::span<const double> h_old, double kappa, RngStream& rng);
UnitVector doa_direction(const ModelParams& model, std::span<const double> x_source, double rate, RngStream& rng);
UnitVector vt_direction(PerturbContext& ctx);
UnitVector wap_direction(const ModelParams& model, const WeightDelta& delta, std::span<const double> x_old);

// Perturbs every prototype feature of ctx.old_batch (old_features[i] is
// h(old_batch[i])). For WAP the inner loop runs once for the batch. With an
// inactive config the features come back unchanged and no randomness is
// consumed.
std::vector<Perturbed> perturb_batch(const PerturberConfig& cfg, PerturbContext& ctx,
                                     std::span<const FeatureVector> old_features);

// Proxy setting: perturb stored class-mean features. doa_old and wap are
// rejected with ConfigError.
std::vector<Perturbed> perturb_proxies(const PerturberConfig& cfg, PerturbContext& ctx,
                                       std::span<const FeatureVector> proxy_features);

}  // namespace moca
