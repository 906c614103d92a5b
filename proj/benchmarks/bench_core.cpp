#include <benchmark/benchmark.h>

#include "moca/engine.hpp"
#include "moca/metrics.hpp"
#include "moca/net.hpp"
#include "moca/perturb.hpp"
#include "moca/randkit.hpp"

using namespace moca;

namespace {

ModelParams default_model() {
    RngStream rng(1);
    return init_params(InitOptions{}, rng);
}

FeatureVector random_input(std::size_t d, RngStream& rng) { return sample_gaussian_vector(d, rng); }

}  // namespace

static void BM_Forward(benchmark::State& state) {
    const ModelParams p = default_model();
    RngStream rng(2);
    const FeatureVector x = random_input(32, rng);
    for (auto _ : state) benchmark::DoNotOptimize(forward(p, x));
}
BENCHMARK(BM_Forward);

static void BM_ForwardBackward(benchmark::State& state) {
    const ModelParams p = default_model();
    RngStream rng(3);
    const FeatureVector x = random_input(32, rng);
    GradientBundle g = GradientBundle::zeros_like(p);
    ForwardCache cache;
    for (auto _ : state) {
        const FeatureVector f = forward(p, x, cache);
        const LossAndGrad lg = ce_loss_and_grads(p, f, 3, 1.0, g.classifier);
        accumulate_backward(p, cache, lg.grad_feature, g);
    }
}
BENCHMARK(BM_ForwardBackward);

static void BM_SampleVmf(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    FeatureVector mu(d, 0.0);
    mu[0] = 1.0;
    const VmfParams params{UnitVector::from_normalized(mu), static_cast<double>(state.range(1))};
    RngStream rng(4);
    for (auto _ : state) benchmark::DoNotOptimize(sample_vmf(params, rng));
}
BENCHMARK(BM_SampleVmf)->Args({3, 1})->Args({64, 10})->Args({64, 100});

static void BM_PerturbBatch(benchmark::State& state) {
    const auto variant = static_cast<Variant>(state.range(0));
    const ModelParams p = default_model();
    RngStream data(5);
    std::vector<Example> old_ex, new_ex;
    for (std::size_t i = 0; i < 32; ++i) {
        old_ex.push_back({random_input(32, data), i % 8, i % 4, i});
        new_ex.push_back({random_input(32, data), 8 + i % 2, 4, i});
    }
    std::vector<const Example*> ob, nb;
    std::vector<FeatureVector> feats;
    for (const auto& e : old_ex) {
        ob.push_back(&e);
        feats.push_back(forward(p, e.input));
    }
    for (const auto& e : new_ex) nb.push_back(&e);
    PerturberConfig cfg;
    cfg.variant = variant;
    if (variant == Variant::vmf) cfg.kappa = 5.0;
    RngStream rng(6), drng(7);
    for (auto _ : state) {
        PerturbContext ctx{p, ob, nb, {}, rng, drng};
        benchmark::DoNotOptimize(perturb_batch(cfg, ctx, feats));
    }
    state.SetLabel(std::string(to_string(variant)));
}
BENCHMARK(BM_PerturbBatch)->DenseRange(static_cast<int>(Variant::gaussian), static_cast<int>(Variant::wap));

static void BM_GradientSpectrum(benchmark::State& state) {
    RngStream rng(8);
    Matrix rows(static_cast<std::size_t>(state.range(0)), 64);
    for (auto& v : rows.data) v = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(gradient_spectrum(rows));
}
BENCHMARK(BM_GradientSpectrum)->Arg(200)->Arg(2000);

BENCHMARK_MAIN();
