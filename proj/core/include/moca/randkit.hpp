#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "moca/geometry.hpp"

namespace moca {

// Counter-based random stream (Philox4x32-10). The output is a pure function
// of (key, counter), so a given seed and call order reproduces the same
// sequence on every platform. split() derives an independent child key.
//
// Single owner: never share one stream between threads; split instead.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) noexcept;

    std::uint64_t seed() const noexcept { return key_; }

    RngStream split(std::uint64_t child_id) const noexcept;

    std::uint64_t next_u64() noexcept;
    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    // Uniform on (0, 1); never returns 0.
    double uniform_open() noexcept;
    // Uniform integer on [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) noexcept;
    double normal() noexcept;

    // Number of 64-bit words drawn so far; used to check that disabled
    // code paths consume nothing.
    std::uint64_t draws() const noexcept { return draws_; }

private:
    RngStream(std::uint64_t key, std::uint64_t stream) noexcept : key_(key), stream_(stream) {}
    void refill() noexcept;

    std::uint64_t key_ = 0;
    std::uint64_t stream_ = 0;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int block_pos_ = 4;
    std::uint64_t draws_ = 0;
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

struct VmfParams {
    UnitVector mu;
    double kappa = 0.0;
};

FeatureVector sample_gaussian_vector(std::size_t d, RngStream& rng);

// Uniform direction on S^{d-1}.
UnitVector sample_uniform_sphere(std::size_t d, RngStream& rng);

double sample_gamma(double shape, RngStream& rng);
double sample_beta(double a, double b, RngStream& rng);

struct VmfSamplerStats {
    std::uint64_t samples = 0;
    std::uint64_t proposals = 0;
    double acceptance_rate() const noexcept {
        return proposals == 0 ? 0.0 : static_cast<double>(samples) / static_cast<double>(proposals);
    }
};

inline constexpr std::uint64_t kVmfMaxProposals = 1'000'000;

// Exact vMF draw: Wood's rejection sampler for w = μᵀx, a uniform tangent
// direction, and a Householder reflection taking e₁ to μ. Throws
// NumericalOverflow if kVmfMaxProposals proposals are rejected.
UnitVector sample_vmf(const VmfParams& params, RngStream& rng, VmfSamplerStats* stats = nullptr);

// log p(x | μ, κ) with normalizer κ^{d/2-1} / ((2π)^{d/2} I_{d/2-1}(κ)).
double vmf_log_density(const VmfParams& params, std::span<const double> x);

// log I_ν(x) for ν ≥ 0, x ≥ 0. Power series for x ≤ 50, uniform asymptotic
// (Debye) expansion above; ν = 0 above the split uses the Hankel expansion.
double log_bessel_i(double nu, double x);

}  // namespace moca
