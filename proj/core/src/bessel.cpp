#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "moca/errors.hpp"
#include "moca/randkit.hpp"

namespace moca {

namespace {

constexpr double kSeriesLimit = 50.0;
constexpr int kDebyeTerms = 12;

using Poly = std::vector<double>;  // coefficients in ascending powers of t

// Debye polynomials u_k(t) from the recurrence
//   u_{k+1}(t) = ½ t²(1 - t²) u_k'(t) + ⅛ ∫₀ᵗ (1 - 5s²) u_k(s) ds.
std::array<Poly, kDebyeTerms> make_debye_polynomials() {
    std::array<Poly, kDebyeTerms> u;
    u[0] = {1.0};
    for (int k = 0; k + 1 < kDebyeTerms; ++k) {
        const Poly& p = u[k];
        Poly next(p.size() + 3, 0.0);
        for (std::size_t j = 1; j < p.size(); ++j) {
            const double dj = static_cast<double>(j) * p[j];  // coefficient of t^{j-1} in u_k'
            next[j + 1] += 0.5 * dj;
            next[j + 3] -= 0.5 * dj;
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            next[j + 1] += 0.125 * p[j] / static_cast<double>(j + 1);
            next[j + 3] -= 0.625 * p[j] / static_cast<double>(j + 3);
        }
        u[k + 1] = std::move(next);
    }
    return u;
}

const std::array<Poly, kDebyeTerms>& debye_polynomials() {
    static const std::array<Poly, kDebyeTerms> polys = make_debye_polynomials();
    return polys;
}

double eval_poly(const Poly& p, double t) {
    double acc = 0.0;
    for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * t + *it;
    return acc;
}

double log_bessel_series(double nu, double x) {
    const double q = 0.25 * x * x;
    double term = 1.0, sum = 1.0;
    for (int k = 0; k < 10000; ++k) {
        term *= q / ((k + 1.0) * (k + 1.0 + nu));
        sum += term;
        if (term < 1e-17 * sum && (k + 1.0) > 0.5 * x) break;
    }
    return nu * std::log(0.5 * x) - std::lgamma(nu + 1.0) + std::log(sum);
}

double log_bessel_debye(double nu, double x) {
    const double z = x / nu;
    const double sq = std::sqrt(1.0 + z * z);
    const double t = 1.0 / sq;
    const double eta = sq + std::log(z / (1.0 + sq));
    const auto& polys = debye_polynomials();
    double sum = 0.0, nu_pow = 1.0;
    for (int k = 0; k < kDebyeTerms; ++k) {
        sum += eval_poly(polys[k], t) / nu_pow;
        nu_pow *= nu;
    }
    return nu * eta - 0.5 * std::log(2.0 * std::numbers::pi * nu) - 0.5 * std::log(sq) + std::log(sum);
}

// Hankel large-argument expansion, used for ν = 0 where Debye is undefined.
double log_bessel_hankel(double nu, double x) {
    const double mu = 4.0 * nu * nu;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 30; ++k) {
        const double odd = 2.0 * k - 1.0;
        const double next = -term * (mu - odd * odd) / (k * 8.0 * x);
        if (std::abs(next) > std::abs(term)) break;
        term = next;
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
}

}  // namespace

double log_bessel_i(double nu, double x) {
    if (!(nu >= 0.0) || !(x >= 0.0)) {
        throw ConfigError("log_bessel_i: requires nu >= 0 and x >= 0");
    }
    if (x == 0.0) return nu == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    double out = 0.0;
    if (x <= kSeriesLimit) {
        out = log_bessel_series(nu, x);
    } else if (nu == 0.0) {
        out = log_bessel_hankel(nu, x);
    } else {
        out = log_bessel_debye(nu, x);
    }
    if (!std::isfinite(out)) {
        throw NumericalOverflow("log_bessel_i: non-finite at nu=" + std::to_string(nu) + ", x=" + std::to_string(x));
    }
    return out;
}

}  // namespace moca
