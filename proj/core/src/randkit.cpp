#include "moca/randkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "moca/errors.hpp"

namespace moca {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::uint32_t k0,
                                           std::uint32_t k1) noexcept {
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
        k0 += kPhiloxW0;
        k1 += kPhiloxW1;
    }
    return ctr;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) noexcept : key_(seed), stream_(0) {}

RngStream RngStream::split(std::uint64_t child_id) const noexcept {
    const std::uint64_t child_key = splitmix64(key_ ^ splitmix64(child_id + 0x632BE59BD9B4E019ull));
    const std::uint64_t child_stream = splitmix64(stream_ + child_id + 1);
    return RngStream(child_key, child_stream);
}

void RngStream::refill() noexcept {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    block_ = philox4x32_10(ctr, static_cast<std::uint32_t>(key_), static_cast<std::uint32_t>(key_ >> 32));
    ++counter_;
    block_pos_ = 0;
}

std::uint64_t RngStream::next_u64() noexcept {
    if (block_pos_ > 2) refill();
    const std::uint64_t lo = block_[block_pos_];
    const std::uint64_t hi = block_[block_pos_ + 1];
    block_pos_ += 2;
    ++draws_;
    return (hi << 32) | lo;
}

double RngStream::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) noexcept {
    // Lemire's multiply-and-reject; unbiased.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::normal() noexcept {
    if (has_spare_normal_) {
        has_spare_normal_ = false;
        return spare_normal_;
    }
    // Box–Muller.
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    has_spare_normal_ = true;
    return radius * std::cos(angle);
}

FeatureVector sample_gaussian_vector(std::size_t d, RngStream& rng) {
    FeatureVector v(d);
    for (auto& x : v) x = rng.normal();
    return v;
}

UnitVector sample_uniform_sphere(std::size_t d, RngStream& rng) {
    for (;;) {
        FeatureVector g = sample_gaussian_vector(d, rng);
        if (norm(g) > 1e-150) return project_to_sphere(g);
    }
}

double sample_gamma(double shape, RngStream& rng) {
    if (shape < 1.0) {
        // Gamma(a) = Gamma(a + 1) · U^{1/a}
        const double g = sample_gamma(shape + 1.0, rng);
        return g * std::pow(rng.uniform_open(), 1.0 / shape);
    }
    // Marsaglia–Tsang.
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        const double x = rng.normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = rng.uniform_open();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

double sample_beta(double a, double b, RngStream& rng) {
    const double x = sample_gamma(a, rng);
    const double y = sample_gamma(b, rng);
    return x / (x + y);
}

UnitVector sample_vmf(const VmfParams& params, RngStream& rng, VmfSamplerStats* stats) {
    const std::size_t d = params.mu.size();
    if (d < 2) throw ShapeMismatch("sample_vmf: dimension must be at least 2");
    const double kappa = params.kappa;
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ConfigError("sample_vmf: kappa must be finite and >= 0");

    const double m1 = static_cast<double>(d - 1);
    const double root = std::sqrt(4.0 * kappa * kappa + m1 * m1);
    // b = (-2κ + root) / (d-1), written without the cancellation at large κ.
    const double b = m1 / (2.0 * kappa + root);
    const double a = (m1 + 2.0 * kappa + root) / 4.0;
    const double offset = 4.0 * a * b / (1.0 + b) - m1 * std::log(m1);

    double w = 0.0;
    std::uint64_t proposals = 0;
    for (;;) {
        if (proposals == kVmfMaxProposals) {
            throw NumericalOverflow("sample_vmf: rejection sampler exceeded " + std::to_string(kVmfMaxProposals) +
                                    " proposals (kappa=" + std::to_string(kappa) + ")");
        }
        ++proposals;
        const double z = sample_beta(m1 / 2.0, m1 / 2.0, rng);
        const double denom = 1.0 - (1.0 - b) * z;
        const double candidate = (1.0 - (1.0 + b) * z) / denom;
        const double t = 2.0 * a * b / denom;
        const double u = rng.uniform_open();
        if (m1 * std::log(t) - t + offset >= std::log(u)) {
            w = std::clamp(candidate, -1.0, 1.0);
            break;
        }
    }
    if (stats != nullptr) {
        stats->samples += 1;
        stats->proposals += proposals;
    }

    // Point around the north pole e₁.
    const UnitVector tangent = sample_uniform_sphere(d - 1, rng);
    const double radial = std::sqrt(std::max(0.0, 1.0 - w * w));
    FeatureVector x(d);
    x[0] = w;
    for (std::size_t i = 1; i < d; ++i) x[i] = radial * tangent[i - 1];

    // Householder reflection H = I - 2vvᵀ with v ∝ e₁ - μ maps e₁ to μ.
    FeatureVector v(params.mu.values());
    for (auto& c : v) c = -c;
    v[0] += 1.0;
    const double vn = norm(v);
    if (vn > 1e-12) {
        for (auto& c : v) c /= vn;
        const double proj = 2.0 * dot(v, x);
        for (std::size_t i = 0; i < d; ++i) x[i] -= proj * v[i];
    }
    return project_to_sphere(x);
}

double vmf_log_density(const VmfParams& params, std::span<const double> x) {
    const std::size_t dim = params.mu.size();
    if (dim < 2) throw ShapeMismatch("vmf_log_density: dimension must be at least 2");
    if (x.size() != dim) throw ShapeMismatch("vmf_log_density: x and mu differ in length");
    const double d = static_cast<double>(dim);
    const double kappa = params.kappa;
    if (kappa == 0.0) {
        // -log |S^{d-1}|, |S^{d-1}| = 2 π^{d/2} / Γ(d/2)
        return -(std::log(2.0) + 0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d));
    }
    const double nu = 0.5 * d - 1.0;
    const double log_norm =
        nu * std::log(kappa) - 0.5 * d * std::log(2.0 * std::numbers::pi) - log_bessel_i(nu, kappa);
    const double out = log_norm + kappa * dot(params.mu.values(), x);
    if (!std::isfinite(out)) {
        throw NumericalOverflow("vmf_log_density: non-finite result at kappa=" + std::to_string(kappa));
    }
    return out;
}

}  // namespace moca
