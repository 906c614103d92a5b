#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "moca/dataio.hpp"
#include "moca/engine.hpp"
#include "moca/errors.hpp"
#include "moca/metrics.hpp"
#include "moca/perturb.hpp"
#include "oracles.hpp"
#include "replay_gradient.hpp"

using namespace moca;

namespace {

const Variant kAllVariants[] = {Variant::gaussian, Variant::vmf, Variant::doa_old,
                                Variant::doa_new,  Variant::vt,  Variant::wap};

PerturberConfig config_for(Variant v, double lambda = 2.0) {
    PerturberConfig c;
    c.variant = v;
    c.lambda = lambda;
    if (v == Variant::vmf) c.kappa = 5.0;
    return c;
}

ModelParams small_model(std::uint64_t seed) {
    RngStream rng(seed);
    InitOptions o;
    o.input_dim = 6;
    o.hidden = {10, 8};
    o.feature_dim = 5;
    o.num_classes = 4;
    return init_params(o, rng);
}

// Model trained briefly with plain replay on the default benchmark, plus
// its stream; shared by the tests that need realistic features.
struct Trained {
    RunConfig cfg;
    TaskStream stream;
    ModelParams model;
};

const Trained& trained() {
    static const Trained t = [] {
        RunConfig c;
        c.epochs = 3;
        c.seed = 21;
        Trained out;
        out.cfg = resolve_config(c);
        out.stream = load_stream(out.cfg);
        out.model = run_experiment(out.cfg, out.stream).model;
        return out;
    }();
    return t;
}

struct Batches {
    std::vector<const Example*> old_batch, new_batch;
    std::vector<FeatureVector> old_features;
};

Batches draw_batches(const Trained& t, std::mt19937_64& gen, std::size_t m, std::size_t n) {
    Batches b;
    std::uniform_int_distribution<std::size_t> old_task(0, 3), item(0, t.stream.tasks[0].train.size() - 1);
    for (std::size_t i = 0; i < m; ++i) {
        b.old_batch.push_back(&t.stream.tasks[old_task(gen)].train[item(gen)]);
        b.old_features.push_back(forward(t.model, b.old_batch.back()->input));
    }
    for (std::size_t i = 0; i < n; ++i) b.new_batch.push_back(&t.stream.tasks[4].train[item(gen)]);
    return b;
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double worst = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        worst = std::max(worst, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return worst;
}

}  // namespace

TEST(PerturbBatch, ZeroLambdaIsIdentityForEveryVariant) {
    const auto& t = trained();
    std::mt19937_64 gen(1);
    const Batches b = draw_batches(t, gen, 8, 16);
    for (Variant v : kAllVariants) {
        RngStream r(1), d(2);
        PerturbContext ctx{t.model, b.old_batch, b.new_batch, {}, r, d};
        const auto out = perturb_batch(config_for(v, 0.0), ctx, b.old_features);
        for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i].feature, b.old_features[i]) << to_string(v);
    }
}

TEST(PerturbBatch, NormPreservedForEveryVariant) {
    const auto& t = trained();
    std::mt19937_64 gen(2);
    for (Variant v : kAllVariants) {
        RngStream r(3), d(4);
        for (int trial = 0; trial < 20; ++trial) {
            const Batches b = draw_batches(t, gen, 8, 16);
            PerturbContext ctx{t.model, b.old_batch, b.new_batch, {}, r, d};
            const auto out = perturb_batch(config_for(v), ctx, b.old_features);
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double hn = oracle::norm(b.old_features[i]);
                ASSERT_LE(std::abs(oracle::norm(out[i].feature) - hn), 1e-9 * hn) << to_string(v);
            }
        }
    }
}

TEST(PerturbBatch, DeterministicGivenStreams) {
    const auto& t = trained();
    std::mt19937_64 gen(3);
    const Batches b = draw_batches(t, gen, 8, 16);
    for (Variant v : kAllVariants) {
        RngStream r1(5), d1(6), r2(5), d2(6);
        PerturbContext c1{t.model, b.old_batch, b.new_batch, {}, r1, d1};
        PerturbContext c2{t.model, b.old_batch, b.new_batch, {}, r2, d2};
        const auto a = perturb_batch(config_for(v), c1, b.old_features);
        const auto z = perturb_batch(config_for(v), c2, b.old_features);
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].feature, z[i].feature) << to_string(v);
    }
}

TEST(PerturbBatch, InactiveConfigConsumesNoRandomness) {
    const auto& t = trained();
    std::mt19937_64 gen(4);
    const Batches b = draw_batches(t, gen, 4, 8);
    RngStream r(7), d(8);
    PerturbContext ctx{t.model, b.old_batch, b.new_batch, {}, r, d};
    perturb_batch(PerturberConfig{}, ctx, b.old_features);
    RngStream fresh(7);
    EXPECT_EQ(r.next_u64(), fresh.next_u64());
}

TEST(PerturbBatch, IncreasesOldClassAngleDeviation) {
    const auto& t = trained();
    std::mt19937_64 gen(5);
    const Batches b = draw_batches(t, gen, 200, 64);
    LabeledFeatureSet base;
    for (std::size_t i = 0; i < b.old_batch.size(); ++i) base.add(b.old_features[i], b.old_batch[i]->label, Group::old_class);
    const double before = *intra_class_angle_deviation(base).old_mean;
    for (Variant v : kAllVariants) {
        RngStream r(9), d(10);
        PerturbContext ctx{t.model, b.old_batch, b.new_batch, {}, r, d};
        const auto out = perturb_batch(config_for(v), ctx, b.old_features);
        LabeledFeatureSet set;
        for (std::size_t i = 0; i < out.size(); ++i) set.add(out[i].feature, b.old_batch[i]->label, Group::old_class);
        EXPECT_GT(*intra_class_angle_deviation(set).old_mean, before) << to_string(v);
    }
}

TEST(PerturbGaussian, MeanDeflectionMatchesMonteCarlo) {
    // Oracle: angle between u and P_S(u + 2ε) for independent uniform u, ε.
    std::mt19937_64 gen(6);
    double want = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const auto u = oracle::unit(gen, 64);
        const auto e = oracle::unit(gen, 64);
        want += oracle::angle_deg(u, oracle::perturb(u, e, 2.0));
    }
    want /= 100000;
    RngStream r(11);
    const PerturberConfig cfg = config_for(Variant::gaussian);
    double got = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const auto h = oracle::scaled(oracle::unit(gen, 64), 3.0);
        got += oracle::angle_deg(h, perturb_gaussian(h, cfg, r));
    }
    EXPECT_NEAR(got / 10000, want, 0.5);
}

TEST(PerturbVmf, ZeroConcentrationMatchesGaussianDeflection) {
    std::mt19937_64 gen(7);
    RngStream r(12);
    PerturberConfig v = config_for(Variant::vmf);
    v.kappa = 0.0;
    const PerturberConfig g = config_for(Variant::gaussian);
    std::vector<double> a, b;
    const int n = 5000;
    for (int i = 0; i < n; ++i) {
        const auto h = oracle::unit(gen, 16);
        a.push_back(oracle::angle_deg(h, perturb_vmf(h, v, r)));
        b.push_back(oracle::angle_deg(h, perturb_gaussian(h, g, r)));
    }
    // Critical value at α = 0.01.
    EXPECT_LT(ks_statistic(a, b), 1.628 * std::sqrt(2.0 / n));
}

TEST(PerturbVmf, LargeConcentrationIsNearNoOp) {
    std::mt19937_64 gen(8);
    RngStream r(13);
    PerturberConfig v = config_for(Variant::vmf);
    v.kappa = 1e7;
    const auto h = oracle::gaussian(gen, 32);
    EXPECT_LT(oracle::angle_deg(h, perturb_vmf(h, v, r)), 0.1);
}

TEST(PerturbVmf, MissingKappaRejected) {
    PerturberConfig v = config_for(Variant::vmf);
    v.kappa.reset();
    EXPECT_THROW(v.validate(), ConfigError);
}

TEST(PerturbDoa, ZeroRateOnOwnPrototypeIsNoOp) {
    const ModelParams p = small_model(1);
    std::mt19937_64 gen(9);
    const auto x = oracle::gaussian(gen, 6);
    const auto h = forward(p, x);
    RngStream r(1), d(2);
    PerturbContext ctx{p, {}, {}, {}, r, d};
    PerturberConfig c = config_for(Variant::doa_old);
    c.dropout_rate = 0.0;
    const auto f = perturb_doa(h, x, c, ctx);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(f[i], h[i], 1e-12);
}

TEST(PerturbVt, SingleExampleClassIsDegenerate) {
    const ModelParams p = small_model(2);
    Example a{std::vector<double>(6, 0.5), 2, 1, 0}, b{std::vector<double>(6, -0.5), 3, 1, 1};
    RngStream r(1), d(2);
    PerturbContext ctx{p, {}, {&a, &b}, {}, r, d};
    EXPECT_THROW(perturb_vt(std::vector<double>(5, 1.0), ctx, config_for(Variant::vt)), DegenerateDeviation);
}

TEST(PerturbVt, TwoExamplesGiveAntipodalDirections) {
    const ModelParams p = small_model(3);
    std::mt19937_64 gen(10);
    Example a{oracle::gaussian(gen, 6), 2, 1, 0}, b{oracle::gaussian(gen, 6), 2, 1, 1};
    const auto fa = forward(p, a.input), fb = forward(p, b.input);
    std::vector<double> diff(fa.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = fa[i] - fb[i];
    const auto axis = oracle::normalized(diff);
    RngStream r(3), d(4);
    PerturbContext ctx{p, {}, {&a, &b}, {}, r, d};
    bool saw_plus = false, saw_minus = false;
    for (int i = 0; i < 50; ++i) {
        const UnitVector e = vt_direction(ctx);
        const double c = oracle::dot(e.values(), axis);
        ASSERT_NEAR(std::abs(c), 1.0, 1e-12);
        (c > 0 ? saw_plus : saw_minus) = true;
    }
    EXPECT_TRUE(saw_plus && saw_minus);
}

TEST(WapInner, BallConstraintAfterEveryIteration) {
    const auto& t = trained();
    std::mt19937_64 gen(11);
    for (std::size_t steps : {1u, 3u}) {
        for (double radius : {0.1, 1.0, 5.0}) {
            const Batches b = draw_batches(t, gen, 10, 10);
            RngStream r(14), d(15);
            PerturbContext ctx{t.model, b.old_batch, b.new_batch, {}, r, d};
            PerturberConfig c = config_for(Variant::wap);
            c.inner_steps = steps;
            c.ball_radius = radius;
            EXPECT_LE(wap_inner(ctx, c).norm(), radius * (1 + 1e-12));
        }
    }
}

TEST(WapInner, ZeroGradientGivesZeroDelta) {
    // Identical unit classifier rows make every logit equal, so the four
    // softmax weights are exactly 1/4 and the CE gradient with respect to the
    // feature is exactly zero.
    ModelParams p = small_model(4);
    for (std::size_t j = 0; j < p.classifier.rows; ++j)
        for (std::size_t c = 0; c < p.classifier.cols; ++c) p.classifier(j, c) = c == 0 ? 1.0 : 0.0;
    Example o{std::vector<double>(6, 0.3), 0, 0, 0}, n{std::vector<double>(6, 0.1), 2, 1, 0};
    RngStream r(1), d(2);
    PerturbContext ctx{p, {&o}, {&n}, {}, r, d};
    EXPECT_EQ(wap_inner(ctx, config_for(Variant::wap)).norm(), 0.0);
}

TEST(WapInner, OneStepDecreasesAdversarialLoss) {
    const auto& t = trained();
    std::mt19937_64 gen(12);
    int decreased = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const Batches b = draw_batches(t, gen, 10, 10);
        RngStream r(100 + trial), d(2);
        PerturbContext ctx{t.model, b.old_batch, b.new_batch, {}, r, d};
        const WapInner inner = wap_inner_detailed(ctx, config_for(Variant::wap));
        const WeightDelta zero = WeightDelta::zeros_like(t.model);
        if (adversarial_loss(t.model, inner.delta, b.old_batch, inner.adversarial_labels) <
            adversarial_loss(t.model, zero, b.old_batch, inner.adversarial_labels)) {
            ++decreased;
        }
    }
    EXPECT_GE(decreased, 190);
}

TEST(PerturbWap, ZeroDeltaIsNoOp) {
    const auto& t = trained();
    const Example& ex = t.stream.tasks[0].train[0];
    const auto h = forward(t.model, ex.input);
    RngStream r(1), d(2);
    PerturbContext ctx{t.model, {}, {}, {}, r, d};
    const auto f = perturb_wap(h, ex.input, WeightDelta::zeros_like(t.model), ctx, config_for(Variant::wap));
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(f[i], h[i], 1e-12);
}

TEST(PerturbWap, DeflectsTowardAdversarialClassRow) {
    const auto& t = trained();
    std::mt19937_64 gen(13);
    int toward = 0, total = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const Batches b = draw_batches(t, gen, 10, 10);
        RngStream r(200 + trial), d(2);
        PerturbContext ctx{t.model, b.old_batch, b.new_batch, {}, r, d};
        const PerturberConfig c = config_for(Variant::wap);
        const WapInner inner = wap_inner_detailed(ctx, c);
        for (std::size_t i = 0; i < b.old_batch.size(); ++i) {
            const auto& h = b.old_features[i];
            const auto f = perturb_wap(h, b.old_batch[i]->input, inner.delta, ctx, c);
            const auto row = t.model.classifier.row(inner.adversarial_labels[i]);
            const std::vector<double> w(row.begin(), row.end());
            toward += oracle::dot(f, w) / oracle::norm(f) >= oracle::dot(h, w) / oracle::norm(h);
            ++total;
        }
    }
    EXPECT_GT(toward, total / 2);
}

TEST(PerturbWap, LiveModelUntouched) {
    const auto& t = trained();
    const ModelParams before = t.model;
    std::mt19937_64 gen(14);
    const Batches b = draw_batches(t, gen, 10, 10);
    RngStream r(1), d(2);
    PerturbContext ctx{t.model, b.old_batch, b.new_batch, {}, r, d};
    perturb_batch(config_for(Variant::wap), ctx, b.old_features);
    EXPECT_EQ(t.model, before);
}

TEST(FixedAngle, RealizesAngleAndFixedPoint) {
    std::mt19937_64 gen(15);
    const auto h = oracle::gaussian(gen, 16);
    const auto e = oracle::unit(gen, 16);
    const auto f = oracle::perturb(h, e, 1.3);
    EXPECT_EQ(project_to_fixed_angle(h, f, 0.0), h);
    const auto same = project_to_fixed_angle(h, f, oracle::angle_deg(h, f));
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(same[i], f[i], 1e-9);
    for (double a = 10.0; a <= 50.0; a += 5.0) {
        EXPECT_NEAR(oracle::angle_deg(h, project_to_fixed_angle(h, f, a)), a, 1e-6);
    }
    EXPECT_THROW(project_to_fixed_angle(h, oracle::scaled(h, 2.0), 20.0), DegenerateVector);
}

TEST(FixedAngle, BatchModeUsesRequestedAngle) {
    const auto& t = trained();
    std::mt19937_64 gen(16);
    const Batches b = draw_batches(t, gen, 20, 20);
    for (Variant v : kAllVariants) {
        PerturberConfig c = config_for(v);
        c.fixed_angle = 30.0;
        RngStream r(1), d(2);
        PerturbContext ctx{t.model, b.old_batch, b.new_batch, {}, r, d};
        for (std::size_t i = 0; const auto& p : perturb_batch(c, ctx, b.old_features)) {
            EXPECT_NEAR(oracle::angle_deg(b.old_features[i++], p.feature), 30.0, 1e-6) << to_string(v);
        }
    }
}

TEST(PerturbProxies, RejectsModelBasedOldVariants) {
    const ModelParams p = small_model(5);
    RngStream r(1), d(2);
    PerturbContext ctx{p, {}, {}, {}, r, d};
    const std::vector<FeatureVector> feats{FeatureVector(5, 1.0)};
    EXPECT_THROW(perturb_proxies(config_for(Variant::wap), ctx, feats), ConfigError);
    EXPECT_THROW(perturb_proxies(config_for(Variant::doa_old), ctx, feats), ConfigError);
    EXPECT_NO_THROW(perturb_proxies(config_for(Variant::gaussian), ctx, feats));
}

TEST(ReplayGradient, MatchesFiniteDifferencesForEveryVariant) {
    std::mt19937_64 gen(17);
    for (Variant v : {Variant::none, Variant::gaussian, Variant::vmf, Variant::doa_old, Variant::doa_new, Variant::vt,
                      Variant::wap}) {
        // Wide enough that a dropout mask never silences the whole feature.
        RngStream init(6);
        InitOptions o;
        o.input_dim = 6;
        o.hidden = {24, 16};
        o.feature_dim = 8;
        o.num_classes = 4;
        const ModelParams p = init_params(o, init);
        const replay_check::Batch b = replay_check::make_batch(gen, 6, 6, 4);
        const double worst = replay_check::worst_relative_error(p, b, config_for(v), 31, 120, 1e-5);
        EXPECT_LT(worst, 1e-4) << to_string(v);
    }
}
