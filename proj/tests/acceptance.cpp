// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any
// criterion fails. Directional criteria run the default synthetic benchmark
// over ten paired seeds.

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include "moca/dataio.hpp"
#include "moca/engine.hpp"
#include "moca/errors.hpp"
#include "moca/metrics.hpp"
#include "moca/perturb.hpp"
#include "moca/randkit.hpp"
#include "moca/result_io.hpp"
#include "moca_cli/cli.hpp"
#include "oracles.hpp"
#include "replay_gradient.hpp"

using namespace moca;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fixed(double v, int digits = 2) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
}

std::string sci(double v) {
    std::ostringstream o;
    o << std::scientific << std::setprecision(2) << v;
    return o.str();
}

const Variant kPerturbing[] = {Variant::gaussian, Variant::vmf, Variant::doa_old,
                               Variant::doa_new,  Variant::vt,  Variant::wap};

PerturberConfig perturber(Variant v, double lambda = 2.0) {
    PerturberConfig c;
    c.variant = v;
    c.lambda = lambda;
    if (v == Variant::vmf) c.kappa = 5.0;
    return c;
}

// Runs every config on the available workers; results keep input order.
std::vector<ExperimentResult> run_all(const std::vector<RunConfig>& configs) {
    std::vector<ExperimentResult> out(configs.size());
    std::vector<std::string> errors(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                out[i] = run_experiment(configs[i]).result;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const std::size_t n = std::min(cli::sweep_threads(), configs.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < n; ++w) pool.emplace_back(worker);
        worker();
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw std::runtime_error("experiment failed: " + e);
    }
    return out;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// One-sided sign test on paired samples: P(wins >= observed) under a fair
// coin, ties dropped.
struct SignTest {
    std::size_t wins = 0, losses = 0;
    double p = 1.0;
};

SignTest sign_test(const std::vector<double>& a, const std::vector<double>& b) {
    SignTest t;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) ++t.wins;
        else if (a[i] < b[i]) ++t.losses;
    }
    const std::size_t n = t.wins + t.losses;
    if (n == 0) return t;
    const boost::math::binomial coin(static_cast<double>(n), 0.5);
    t.p = t.wins == 0 ? 1.0 : boost::math::cdf(boost::math::complement(coin, static_cast<double>(t.wins) - 1.0));
    return t;
}

std::vector<double> finals(const std::vector<ExperimentResult>& rs) {
    std::vector<double> v;
    for (const auto& r : rs) v.push_back(r.final_accuracy);
    return v;
}

// Model trained briefly with plain replay on the default benchmark.
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
    const std::size_t last = t.stream.num_tasks() - 1;
    std::uniform_int_distribution<std::size_t> old_task(0, last - 1), item(0, t.stream.tasks[0].train.size() - 1);
    for (std::size_t i = 0; i < m; ++i) {
        b.old_batch.push_back(&t.stream.tasks[old_task(gen)].train[item(gen)]);
        b.old_features.push_back(forward(t.model, b.old_batch.back()->input));
    }
    for (std::size_t i = 0; i < n; ++i) b.new_batch.push_back(&t.stream.tasks[last].train[item(gen)]);
    return b;
}

// ---- criteria ---------------------------------------------------------------

Verdict gradient_correctness() {
    const auto t0 = Clock::now();
    RngStream init(5);
    InitOptions o;
    o.input_dim = 12;
    o.hidden = {24, 16};
    o.feature_dim = 10;
    o.num_classes = 6;
    const ModelParams model = init_params(o, init);
    std::mt19937_64 gen(8);
    double worst = 0.0;
    std::string worst_variant = "none";
    std::vector<Variant> all{Variant::none};
    all.insert(all.end(), std::begin(kPerturbing), std::end(kPerturbing));
    for (Variant v : all) {
        const replay_check::Batch b = replay_check::make_batch(gen, o.input_dim, 8, 6);
        const double e = replay_check::worst_relative_error(model, b, perturber(v), 40, 120, 1e-5);
        if (e > worst) {
            worst = e;
            worst_variant = std::string(to_string(v));
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 60.0, "worst relative error " + sci(worst) + " (" + worst_variant +
                                             "), 120 coords x 7 variants, " + fixed(secs, 1) + " s"};
}

Verdict norm_preservation() {
    const auto& t = trained();
    std::mt19937_64 gen(2);
    std::size_t failures = 0, total = 0;
    double worst = 0.0;
    for (Variant v : kPerturbing) {
        RngStream r(3), d(4);
        std::size_t done = 0;
        while (done < 10000) {
            const Batches b = draw_batches(t, gen, 50, 20);
            PerturbContext ctx{t.model, b.old_batch, b.new_batch, {}, r, d};
            const auto out = perturb_batch(perturber(v), ctx, b.old_features);
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double hn = oracle::norm(b.old_features[i]);
                const double rel = std::abs(oracle::norm(out[i].feature) - hn) / hn;
                worst = std::max(worst, rel);
                failures += rel > 1e-9;
            }
            done += out.size();
        }
        total += done;
    }
    return {failures == 0, std::to_string(total) + " perturbations, " + std::to_string(failures) +
                               " failures, worst relative norm change " + sci(worst)};
}

Verdict vmf_fidelity() {
    const auto t0 = Clock::now();
    const std::size_t n = 100000;
    const double critical = boost::math::quantile(boost::math::chi_squared(49), 0.99);
    double worst_gap = 0.0, worst_chi = 0.0;
    bool ok = true;
    std::uint64_t seed = 100;
    for (double d : {3.0, 8.0, 64.0}) {
        for (double kappa : {0.0, 1.0, 10.0, 100.0}) {
            FeatureVector mu(static_cast<std::size_t>(d), 0.0);
            mu[0] = 1.0;
            const VmfParams p{UnitVector::from_normalized(mu), kappa};
            RngStream r(seed++);
            std::vector<double> dots(n);
            double sum = 0.0;
            for (auto& x : dots) {
                x = sample_vmf(p, r)[0];
                sum += x;
            }
            const double want = d == 3.0 && kappa > 0.0 ? 1.0 / std::tanh(kappa) - 1.0 / kappa
                                                        : oracle::bessel_ratio(d, kappa);
            const double gap = std::abs(sum / n - want);
            const double chi = oracle::chi_square_equiprobable(dots, oracle::vmf_marginal_edges(d, kappa, 50));
            worst_gap = std::max(worst_gap, gap);
            worst_chi = std::max(worst_chi, chi);
            ok = ok && gap <= 0.01 && chi < critical;
        }
    }
    const double secs = seconds_since(t0);
    return {ok && secs < 120.0, "12 (d, kappa) cells, worst resultant gap " + sci(worst_gap) + ", worst chi2 " +
                                    fixed(worst_chi) + " < " + fixed(critical) + ", " + fixed(secs, 1) + " s"};
}

// The per-item band is two-sided at 3 sigma, so a few of the 5000 items fall
// outside it by chance; the check compares that count with its exact
// binomial expectation.
Verdict reservoir_correctness() {
    const std::size_t m = 50, n = 5000, trials = 1000;
    std::vector<std::size_t> kept(n, 0);
    RngStream r(4);
    for (std::size_t t = 0; t < trials; ++t) {
        MemoryBuffer b(m);
        for (std::size_t i = 0; i < n; ++i) buffer_offer(b, Example{{0.0}, 0, 0, i}, r);
        for (const auto& e : b.items) ++kept[e.id];
    }
    const double p = static_cast<double>(m) / n;
    const double sigma = std::sqrt(p * (1 - p) / trials);
    std::size_t outside = 0;
    double worst_z = 0.0;
    for (std::size_t k : kept) {
        const double z = std::abs(static_cast<double>(k) / trials - p) / sigma;
        worst_z = std::max(worst_z, z);
        outside += z > 3.0;
    }
    const boost::math::binomial count(static_cast<double>(trials), p);
    const double lo = std::ceil(trials * p - 3.0 * sigma * trials) - 1.0;
    const double hi = std::floor(trials * p + 3.0 * sigma * trials);
    const double p_out = (lo >= 0.0 ? boost::math::cdf(count, lo) : 0.0) +
                         boost::math::cdf(boost::math::complement(count, hi));
    const double expected = p_out * n;
    const double allowed = expected + 4.0 * std::sqrt(expected * (1 - p_out));
    return {static_cast<double>(outside) <= allowed,
            std::to_string(outside) + " of 5000 items outside 3 sigma (binomial expectation " + fixed(expected, 1) +
                ", allowed " + fixed(allowed, 1) + "), worst z " + fixed(worst_z)};
}

Verdict wap_descent() {
    const auto& t = trained();
    std::mt19937_64 gen(12);
    int decreased = 0;
    double worst_norm = 0.0;
    PerturberConfig c = perturber(Variant::wap);
    for (int trial = 0; trial < 200; ++trial) {
        const Batches b = draw_batches(t, gen, 10, 10);
        RngStream r(100 + trial), d(2);
        PerturbContext ctx{t.model, b.old_batch, b.new_batch, {}, r, d};
        const WapInner inner = wap_inner_detailed(ctx, c);
        worst_norm = std::max(worst_norm, inner.delta.norm());
        const WeightDelta zero = WeightDelta::zeros_like(t.model);
        decreased += adversarial_loss(t.model, inner.delta, b.old_batch, inner.adversarial_labels) <
                     adversarial_loss(t.model, zero, b.old_batch, inner.adversarial_labels);
    }
    return {decreased >= 190 && worst_norm <= c.ball_radius * (1 + 1e-12),
            std::to_string(decreased) + "/200 inner steps decreased the adversarial loss; max |delta| " +
                fixed(worst_norm, 6) + " <= " + fixed(c.ball_radius, 1)};
}

RunConfig reduced(Variant v) {
    RunConfig c;
    c.perturber.variant = v;
    if (v == Variant::vmf) c.perturber.kappa = 5.0;
    c.epochs = 2;
    c.seed = 17;
    return c;
}

Verdict baseline_equivalence() {
    std::vector<RunConfig> configs{reduced(Variant::none)};
    for (Variant v : kPerturbing) {
        RunConfig c = reduced(v);
        c.perturber.lambda = 0.0;
        c.lambda_given = true;
        configs.push_back(c);
    }
    const auto results = run_all(configs);
    const std::string base = result_to_json(results[0]);
    std::size_t same = 0;
    for (std::size_t i = 1; i < results.size(); ++i) same += result_to_json(results[i]) == base;
    return {same == std::size(kPerturbing),
            std::to_string(same) + "/6 disabled variants byte-identical to the baseline result"};
}

struct OfflineRuns {
    std::map<Variant, std::vector<ExperimentResult>> by_variant;
};

const OfflineRuns& offline_runs(std::size_t seeds) {
    static const OfflineRuns runs = [seeds] {
        OfflineRuns o;
        std::vector<RunConfig> configs;
        const Variant vs[] = {Variant::none, Variant::gaussian, Variant::wap};
        for (Variant v : vs) {
            for (std::uint64_t s = 0; s < seeds; ++s) {
                RunConfig c;
                c.perturber.variant = v;
                c.seed = s;
                c.diag_population = "augmented";
                configs.push_back(c);
            }
        }
        const auto results = run_all(configs);
        for (std::size_t i = 0; i < results.size(); ++i) o.by_variant[vs[i / seeds]].push_back(results[i]);
        return o;
    }();
    return runs;
}

Verdict offline_ordering(std::size_t seeds) {
    const auto t0 = Clock::now();
    const auto& runs = offline_runs(seeds);
    const auto er = finals(runs.by_variant.at(Variant::none));
    const auto ga = finals(runs.by_variant.at(Variant::gaussian));
    const auto wap = finals(runs.by_variant.at(Variant::wap));
    const SignTest wg = sign_test(wap, ga), ge = sign_test(ga, er);
    const bool ok = mean(wap) > mean(ga) && mean(ga) > mean(er) && wg.p < 0.05 && ge.p < 0.05;
    return {ok, "mean final accuracy WAP " + fixed(mean(wap)) + " / Gaussian " + fixed(mean(ga)) + " / ER " +
                    fixed(mean(er)) + "; sign test WAP>Gaussian " + std::to_string(wg.wins) + "-" +
                    std::to_string(wg.losses) + " p=" + fixed(wg.p, 4) + ", Gaussian>ER " + std::to_string(ge.wins) +
                    "-" + std::to_string(ge.losses) + " p=" + fixed(ge.p, 4) + "; " + fixed(seconds_since(t0), 0) +
                    " s"};
}

Verdict online_ordering(std::size_t seeds) {
    std::vector<RunConfig> configs;
    for (Variant v : {Variant::none, Variant::wap}) {
        for (std::uint64_t s = 0; s < seeds; ++s) {
            RunConfig c;
            c.setting = Setting::online;
            c.perturber.variant = v;
            c.perturber.lambda = 0.8;
            c.lambda_given = true;
            c.seed = s;
            configs.push_back(c);
        }
    }
    const auto rs = run_all(configs);
    const std::vector<ExperimentResult> er(rs.begin(), rs.begin() + seeds), wap(rs.begin() + seeds, rs.end());
    const double e = mean(finals(er)), w = mean(finals(wap));
    return {w >= e, "mean final accuracy WAP " + fixed(w) + " vs ER " + fixed(e) + " (lambda 0.8, single pass)"};
}

Verdict proxy_ordering(std::size_t seeds) {
    std::vector<RunConfig> configs;
    const Variant vs[] = {Variant::none, Variant::gaussian, Variant::vt};
    for (Variant v : vs) {
        for (std::uint64_t s = 0; s < seeds; ++s) {
            RunConfig c;
            c.setting = Setting::proxy;
            c.perturber.variant = v;
            c.seed = s;
            configs.push_back(c);
        }
    }
    const auto rs = run_all(configs);
    std::vector<double> m;
    for (std::size_t k = 0; k < 3; ++k) {
        m.push_back(mean(finals(std::vector<ExperimentResult>(rs.begin() + k * seeds, rs.begin() + (k + 1) * seeds))));
    }
    std::size_t rejected = 0;
    for (Variant v : {Variant::wap, Variant::doa_old}) {
        RunConfig c;
        c.setting = Setting::proxy;
        c.perturber.variant = v;
        try {
            resolve_config(c);
        } catch (const ConfigError&) {
            ++rejected;
        }
    }
    return {m[2] > m[1] && m[1] > m[0] && rejected == 2,
            "mean final accuracy VT " + fixed(m[2]) + " / Gaussian " + fixed(m[1]) + " / baseline " + fixed(m[0]) +
                "; " + std::to_string(rejected) + "/2 of WAP, DOA-old rejected"};
}

Verdict deviation_direction(std::size_t seeds) {
    const auto& runs = offline_runs(seeds);
    auto dev = [&](Variant v) {
        std::vector<double> old_d, new_d;
        for (const auto& r : runs.by_variant.at(v)) {
            old_d.push_back(*r.diagnostics.old_deviation);
            new_d.push_back(*r.diagnostics.new_deviation);
        }
        return std::pair{mean(old_d), mean(new_d)};
    };
    const auto [er_old, er_new] = dev(Variant::none);
    const auto [ga_old, ga_new] = dev(Variant::gaussian);
    const auto [wap_old, wap_new] = dev(Variant::wap);
    const double er_gap = std::abs(er_new - er_old), wap_gap = std::abs(wap_new - wap_old);
    const bool ok = er_old < ga_old && er_old < wap_old && wap_gap <= 0.75 * er_gap;
    return {ok, "old-class deviation (deg) ER " + fixed(er_old) + " / Gaussian " + fixed(ga_old) + " / WAP " +
                    fixed(wap_old) + "; old/new gap ER " + fixed(er_gap) + " -> WAP " + fixed(wap_gap) +
                    " (needs <= " + fixed(0.75 * er_gap) + ")"};
}

Verdict spectrum_tail(std::size_t seeds) {
    const auto& runs = offline_runs(seeds);
    auto tail = [&](Variant v) {
        std::vector<double> s;
        for (const auto& r : runs.by_variant.at(v)) {
            const auto& n = r.diagnostics.spectrum_normalized;
            double sum = 0.0;
            for (std::size_t i = 5; i < n.size(); ++i) sum += n[i];
            s.push_back(sum);
        }
        return mean(s);
    };
    const double er = tail(Variant::none), ga = tail(Variant::gaussian), wap = tail(Variant::wap);
    return {ga > er && wap > er, "normalized tail sum (ranks 6..d_f) ER " + fixed(er, 4) + " / Gaussian " +
                                     fixed(ga, 4) + " / WAP " + fixed(wap, 4)};
}

Verdict margin_inequality() {
    std::size_t violations = 0, equal = 0;
    std::uint64_t child = 0;
    for (DeviationSign s : {DeviationSign::nonnegative, DeviationSign::nonpositive, DeviationSign::zero}) {
        RngStream r = RngStream(12).split(child++);
        const MarginReport rep = large_margin_inequality_check(r, 10000, s);
        violations += rep.violations;
        if (s == DeviationSign::zero) equal = rep.exact_equalities;
    }
    return {violations == 0 && equal == 10000, std::to_string(violations) +
                                                   " violations over 2x10^4 signed trials; " + std::to_string(equal) +
                                                   "/10^4 exact equalities at zero deviation"};
}

Verdict idx_parser() {
    std::size_t fixtures_ok = 0;
    const std::vector<std::vector<std::uint8_t>> fixtures{
        {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 10, 20, 30, 40},
        {0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9},
        {0, 0, 8, 3, 0, 0, 0, 0, 0, 0, 0, 28, 0, 0, 0, 28},
    };
    for (const auto& f : fixtures) fixtures_ok += encode_idx(parse_idx(f)) == f;

    std::mt19937_64 gen(13);
    std::uniform_int_distribution<int> byte(0, 255), len(0, 48), coin(0, 3);
    std::size_t typed = 0, parsed = 0, other = 0;
    for (int i = 0; i < 100000; ++i) {
        std::vector<std::uint8_t> raw;
        if (coin(gen) == 0) {
            raw.resize(len(gen));
            for (auto& b : raw) b = static_cast<std::uint8_t>(byte(gen));
        } else {
            raw = fixtures[i % 2];
            for (int f = 0, flips = 1 + coin(gen); f < flips; ++f) {
                raw[gen() % raw.size()] = static_cast<std::uint8_t>(byte(gen));
            }
            if (coin(gen) == 0) raw.resize(gen() % (raw.size() + 4), 0);
        }
        try {
            parse_idx(raw);
            ++parsed;
        } catch (const IdxError&) {
            ++typed;
        } catch (...) {
            ++other;
        }
    }
    return {fixtures_ok == fixtures.size() && other == 0,
            std::to_string(fixtures_ok) + "/3 fixtures round-trip; fuzz 10^5 inputs: " + std::to_string(parsed) +
                " parsed, " + std::to_string(typed) + " typed errors, " + std::to_string(other) + " other"};
}

Verdict fixed_angle(const fs::path& record_dir, std::size_t seeds) {
    const auto& t = trained();
    std::mt19937_64 gen(16);
    double worst = 0.0;
    for (Variant v : kPerturbing) {
        for (double angle = 10.0; angle <= 50.0; angle += 5.0) {
            const Batches b = draw_batches(t, gen, 20, 20);
            PerturberConfig c = perturber(v);
            c.fixed_angle = angle;
            RngStream r(1), d(2);
            PerturbContext ctx{t.model, b.old_batch, b.new_batch, {}, r, d};
            const auto out = perturb_batch(c, ctx, b.old_features);
            for (std::size_t i = 0; i < out.size(); ++i) {
                worst = std::max(worst, std::abs(oracle::angle_deg(b.old_features[i], out[i].feature) - angle));
            }
        }
    }

    const std::vector<double> angles{0, 10, 20, 30, 40, 50, 60, 75, 90};
    std::vector<RunConfig> configs;
    for (double a : angles) {
        for (std::uint64_t s = 0; s < seeds; ++s) {
            RunConfig c;
            c.perturber.variant = Variant::gaussian;
            c.perturber.fixed_angle = a;
            c.seed = s;
            configs.push_back(c);
        }
    }
    const auto rs = run_all(configs);
    std::ostringstream csv;
    csv << "angle_deg,runs,mean_final_accuracy\n";
    for (std::size_t k = 0; k < angles.size(); ++k) {
        const double m =
            mean(finals(std::vector<ExperimentResult>(rs.begin() + k * seeds, rs.begin() + (k + 1) * seeds)));
        csv << angles[k] << "," << seeds << "," << std::setprecision(17) << m << "\n";
    }
    const fs::path record = record_dir / "fixed_angle_sweep.csv";
    write_text_file(record, csv.str());
    return {worst <= 1e-6, "worst realized-angle error " + sci(worst) + " deg over 10..50 deg x 6 variants; sweep of " +
                               std::to_string(angles.size()) + " angles written to " + record.string()};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance suite"};
    std::string record_dir = "acceptance_records";
    std::size_t seeds = 10, sweep_seeds = 3;
    std::set<int> only;
    app.add_option("--record-dir", record_dir, "directory for emitted records");
    app.add_option("--seeds", seeds, "paired seeds for the directional criteria");
    app.add_option("--sweep-seeds", sweep_seeds, "seeds per angle in the fixed-angle sweep");
    app.add_option("--only", only, "run only these criteria");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"norm preservation", norm_preservation},
        {"vMF sampler fidelity", vmf_fidelity},
        {"reservoir correctness", reservoir_correctness},
        {"WAP inner descent", wap_descent},
        {"baseline equivalence", baseline_equivalence},
        {"offline ordering WAP > Gaussian > ER", [&] { return offline_ordering(seeds); }},
        {"online ordering WAP >= ER", [&] { return online_ordering(seeds); }},
        {"proxy ordering VT > Gaussian > baseline", [&] { return proxy_ordering(seeds); }},
        {"old-class deviation direction", [&] { return deviation_direction(seeds); }},
        {"gradient spectrum tail", [&] { return spectrum_tail(seeds); }},
        {"large-margin inequality", margin_inequality},
        {"IDX parser", idx_parser},
        {"fixed-angle mode", [&] { return fixed_angle(record_dir, sweep_seeds); }},
    };

    std::size_t failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!only.empty() && !only.contains(id)) continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        failed += !v.pass;
        std::cout << (v.pass ? "PASS" : "FAIL") << " " << std::setw(2) << id << " " << criteria[i].first << ": "
                  << v.detail << std::endl;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
