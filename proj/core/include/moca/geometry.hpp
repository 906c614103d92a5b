#pragma once

#include <span>
#include <vector>

namespace moca {

using FeatureVector = std::vector<double>;

// Norms at or below this are treated as having no direction.
inline constexpr double kDegenerateNorm = 1e-30;

// A FeatureVector on the unit hypersphere. Only constructible through
// project_to_sphere() or from values the caller asserts are unit length.
class UnitVector {
public:
    UnitVector() = default;

    // Wraps already-normalized values; throws DegenerateVector if
    // |‖values‖ - 1| exceeds 1e-12.
    static UnitVector from_normalized(FeatureVector values);

    const FeatureVector& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

private:
    explicit UnitVector(FeatureVector v) : values_(std::move(v)) {}
    FeatureVector values_;

    friend UnitVector project_to_sphere(std::span<const double> v);
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

UnitVector project_to_sphere(std::span<const double> v);

// f = ‖h‖ · P_S(P_S(h) + λ·ε). eps must already be unit length; it is not
// re-normalized. λ = 0 returns h unchanged.
FeatureVector hyperspherical_perturb(std::span<const double> h, const UnitVector& eps, double lambda);

// Vector-Jacobian product of hyperspherical_perturb with respect to h, with
// eps held constant: returns (∂f/∂h)ᵀ · grad_f.
FeatureVector hyperspherical_perturb_vjp(std::span<const double> h, const UnitVector& eps, double lambda,
                                         std::span<const double> grad_f);

// Δf in the closed form ((‖h‖ - ‖h + Δ̃‖)·h + ‖h‖·Δ̃) / ‖h + Δ̃‖ with the
// unconstrained step Δ̃ = ‖h‖·λ·ε (λ·ε measured after projecting h onto the
// unit sphere). h + Δf equals hyperspherical_perturb(h, eps, λ).
FeatureVector decompose_delta(std::span<const double> h, const UnitVector& eps, double lambda);

// Angle in degrees, [0, 180]. Cosine is clamped before arccos.
double angle_between(std::span<const double> u, std::span<const double> v);

// Rotates h within span{h, direction} so the result makes exactly
// `angle_deg` with h and keeps ‖h‖. Only the component of `direction`
// orthogonal to h matters.
FeatureVector rotate_to_angle(std::span<const double> h, std::span<const double> direction, double angle_deg);

// VJP of rotate_to_angle with respect to h, direction held constant.
FeatureVector rotate_to_angle_vjp(std::span<const double> h, std::span<const double> direction, double angle_deg,
                                  std::span<const double> grad_out);

}  // namespace moca
