#include "moca/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "moca/errors.hpp"

namespace moca {

namespace {

void require_same_size(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size()) {
        throw ShapeMismatch(std::string(what) + ": length " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
    }
}

double checked_norm(std::span<const double> v, const char* what) {
    const double n = norm(v);
    if (!(n > kDegenerateNorm)) {
        throw DegenerateVector(std::string(what) + ": norm " + std::to_string(n) + " has no direction");
    }
    return n;
}

}  // namespace

UnitVector UnitVector::from_normalized(FeatureVector values) {
    const double n = norm(values);
    if (!(std::abs(n - 1.0) <= 1e-12)) {
        throw DegenerateVector("UnitVector::from_normalized: norm " + std::to_string(n) + " is not 1");
    }
    return UnitVector(std::move(values));
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

UnitVector project_to_sphere(std::span<const double> v) {
    const double n = checked_norm(v, "project_to_sphere");
    FeatureVector out(v.begin(), v.end());
    for (auto& x : out) x /= n;
    return UnitVector(std::move(out));
}

FeatureVector hyperspherical_perturb(std::span<const double> h, const UnitVector& eps, double lambda) {
    require_same_size(h, eps.values(), "hyperspherical_perturb");
    const double r = checked_norm(h, "hyperspherical_perturb");
    if (lambda == 0.0) return FeatureVector(h.begin(), h.end());

    FeatureVector v(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) v[i] = h[i] / r + lambda * eps[i];
    const double n = checked_norm(v, "hyperspherical_perturb (P_S(h) + λ·ε)");
    for (auto& x : v) x *= r / n;
    return v;
}

FeatureVector hyperspherical_perturb_vjp(std::span<const double> h, const UnitVector& eps, double lambda,
                                         std::span<const double> grad_f) {
    require_same_size(h, eps.values(), "hyperspherical_perturb_vjp");
    require_same_size(h, grad_f, "hyperspherical_perturb_vjp");
    const double r = checked_norm(h, "hyperspherical_perturb_vjp");
    if (lambda == 0.0) return FeatureVector(grad_f.begin(), grad_f.end());

    // f = r·v̂ with u = h/r, v = u + λε, v̂ = v/‖v‖.
    // ∂f/∂h ᵀ g = u (v̂·g) + (1/‖v‖) (I - uuᵀ)(I - v̂v̂ᵀ) g
    const std::size_t d = h.size();
    FeatureVector u(d), vhat(d);
    for (std::size_t i = 0; i < d; ++i) {
        u[i] = h[i] / r;
        vhat[i] = u[i] + lambda * eps[i];
    }
    const double n = checked_norm(vhat, "hyperspherical_perturb_vjp (P_S(h) + λ·ε)");
    for (auto& x : vhat) x /= n;

    const double vg = dot(vhat, grad_f);
    FeatureVector t(d);
    for (std::size_t i = 0; i < d; ++i) t[i] = grad_f[i] - vhat[i] * vg;
    const double ut = dot(u, t);
    FeatureVector out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = u[i] * vg + (t[i] - u[i] * ut) / n;
    return out;
}

FeatureVector decompose_delta(std::span<const double> h, const UnitVector& eps, double lambda) {
    require_same_size(h, eps.values(), "decompose_delta");
    const double r = checked_norm(h, "decompose_delta");
    const std::size_t d = h.size();
    if (lambda == 0.0) return FeatureVector(d, 0.0);

    FeatureVector step(d), shifted(d);
    for (std::size_t i = 0; i < d; ++i) {
        step[i] = r * lambda * eps[i];
        shifted[i] = h[i] + step[i];
    }
    const double shifted_norm = checked_norm(shifted, "decompose_delta (h + Δ̃f)");
    FeatureVector delta(d);
    for (std::size_t i = 0; i < d; ++i) {
        delta[i] = ((r - shifted_norm) * h[i] + r * step[i]) / shifted_norm;
    }
    return delta;
}

double angle_between(std::span<const double> u, std::span<const double> v) {
    require_same_size(u, v, "angle_between");
    const double nu = checked_norm(u, "angle_between");
    const double nv = checked_norm(v, "angle_between");
    // 2·atan2(‖û − v̂‖, ‖û + v̂‖) keeps full precision near 0° and 180°,
    // where acos of a rounded cosine loses about half the digits.
    double diff = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = u[i] / nu, b = v[i] / nv;
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)) * 180.0 / std::numbers::pi;
}

namespace {

struct RotationFrame {
    double r = 0.0;
    FeatureVector u;        // h / ‖h‖
    FeatureVector tangent;  // unit, orthogonal to u
    double q_norm = 0.0;    // ‖p - (p·u)u‖ before normalization
    double pu = 0.0;        // p·u
};

RotationFrame make_frame(std::span<const double> h, std::span<const double> direction) {
    require_same_size(h, direction, "rotate_to_angle");
    RotationFrame fr;
    fr.r = checked_norm(h, "rotate_to_angle");
    const std::size_t d = h.size();
    fr.u.resize(d);
    for (std::size_t i = 0; i < d; ++i) fr.u[i] = h[i] / fr.r;
    const double pn = checked_norm(direction, "rotate_to_angle (direction)");
    fr.pu = dot(direction, fr.u);
    fr.tangent.resize(d);
    for (std::size_t i = 0; i < d; ++i) fr.tangent[i] = direction[i] - fr.pu * fr.u[i];
    fr.q_norm = norm(fr.tangent);
    if (!(fr.q_norm > 1e-12 * pn)) {
        throw DegenerateVector("rotate_to_angle: direction is collinear with h");
    }
    for (auto& x : fr.tangent) x /= fr.q_norm;
    return fr;
}

}  // namespace

FeatureVector rotate_to_angle(std::span<const double> h, std::span<const double> direction, double angle_deg) {
    if (angle_deg == 0.0) {
        require_same_size(h, direction, "rotate_to_angle");
        checked_norm(h, "rotate_to_angle");
        return FeatureVector(h.begin(), h.end());
    }
    const RotationFrame fr = make_frame(h, direction);
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    FeatureVector out(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) out[i] = fr.r * (c * fr.u[i] + s * fr.tangent[i]);
    return out;
}

FeatureVector rotate_to_angle_vjp(std::span<const double> h, std::span<const double> direction, double angle_deg,
                                  std::span<const double> grad_out) {
    require_same_size(h, grad_out, "rotate_to_angle_vjp");
    if (angle_deg == 0.0) return FeatureVector(grad_out.begin(), grad_out.end());
    const RotationFrame fr = make_frame(h, direction);
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    const std::size_t d = h.size();

    // out = r(c·u + s·t), t = q/‖q‖, q = p - (p·u)u, u = h/r.
    const double tg = dot(fr.tangent, grad_out);
    FeatureVector gt(d);  // (I - ttᵀ) g
    for (std::size_t i = 0; i < d; ++i) gt[i] = grad_out[i] - fr.tangent[i] * tg;
    const double gtu = dot(gt, fr.u);

    // Gradient with respect to u (before the tangent-space projection of du).
    const double k = fr.r * s / fr.q_norm;
    FeatureVector gu(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double p_i = fr.q_norm * fr.tangent[i] + fr.pu * fr.u[i];
        gu[i] = fr.r * c * grad_out[i] - k * (gtu * p_i + fr.pu * gt[i]);
    }
    const double radial = c * dot(fr.u, grad_out) + s * tg;
    const double guu = dot(gu, fr.u);
    FeatureVector out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = radial * fr.u[i] + (gu[i] - guu * fr.u[i]) / fr.r;
    return out;
}

}  // namespace moca
