#include "moca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "moca/errors.hpp"

namespace moca {

namespace {

struct ClassStats {
    FeatureVector sum;  // of normalized members
    std::size_t count = 0;
    Group group = Group::new_class;
};

std::map<std::size_t, ClassStats> class_sums(const LabeledFeatureSet& set) {
    if (set.features.size() != set.labels.size() ||
        (!set.groups.empty() && set.groups.size() != set.features.size())) {
        throw ShapeMismatch("LabeledFeatureSet: features, labels and groups differ in length");
    }
    std::map<std::size_t, ClassStats> stats;
    for (std::size_t i = 0; i < set.features.size(); ++i) {
        const UnitVector u = project_to_sphere(set.features[i]);
        auto& s = stats[set.labels[i]];
        if (s.sum.empty()) s.sum.assign(u.size(), 0.0);
        if (s.sum.size() != u.size()) throw ShapeMismatch("LabeledFeatureSet: feature lengths differ");
        for (std::size_t c = 0; c < u.size(); ++c) s.sum[c] += u[c];
        ++s.count;
        if (!set.groups.empty()) s.group = set.groups[i];
    }
    return stats;
}

}  // namespace

AngleDeviation intra_class_angle_deviation(const LabeledFeatureSet& set) {
    const auto stats = class_sums(set);
    std::map<std::size_t, double> total;
    for (std::size_t i = 0; i < set.features.size(); ++i) {
        total[set.labels[i]] += angle_between(set.features[i], stats.at(set.labels[i]).sum);
    }
    AngleDeviation out;
    double old_sum = 0.0, new_sum = 0.0;
    std::size_t old_n = 0, new_n = 0;
    for (const auto& [label, s] : stats) {
        const double mean = total[label] / static_cast<double>(s.count);
        out.per_class[label] = mean;
        if (s.group == Group::old_class) {
            old_sum += mean;
            ++old_n;
        } else {
            new_sum += mean;
            ++new_n;
        }
    }
    if (old_n > 0) out.old_mean = old_sum / static_cast<double>(old_n);
    if (new_n > 0) out.new_mean = new_sum / static_cast<double>(new_n);
    return out;
}

std::vector<double> jacobi_eigenvalues(Matrix a, std::size_t* sweeps) {
    if (a.rows != a.cols) throw ShapeMismatch("jacobi_eigenvalues: matrix must be square");
    const std::size_t n = a.rows;
    double frob = 0.0;
    for (double v : a.data) frob += v * v;
    frob = std::sqrt(frob);
    const double tol = 1e-12 * std::max(1.0, frob);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    std::size_t sweep = 0;
    constexpr std::size_t kMaxSweeps = 100;
    while (off_norm() > tol && sweep < kMaxSweeps) {
        ++sweep;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    if (sweeps != nullptr) *sweeps = sweep;
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
}

SpectrumReport gradient_spectrum(const Matrix& rows) {
    if (rows.rows == 0 || rows.cols == 0) throw ShapeMismatch("gradient_spectrum: empty matrix");
    const std::size_t d = rows.cols;
    Matrix gram(d, d);
    for (std::size_t r = 0; r < rows.rows; ++r) {
        const auto row = rows.row(r);
        for (std::size_t i = 0; i < d; ++i) {
            const double ri = row[i];
            if (ri == 0.0) continue;
            for (std::size_t j = i; j < d; ++j) gram(i, j) += ri * row[j];
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) gram(i, j) = gram(j, i);

    SpectrumReport out;
    const auto eig = jacobi_eigenvalues(std::move(gram), &out.sweeps);
    // Only min(rows, cols) singular values exist.
    const std::size_t rank_bound = std::min(rows.rows, d);
    out.singular_values.resize(d, 0.0);
    for (std::size_t i = 0; i < rank_bound; ++i) out.singular_values[i] = std::sqrt(std::max(eig[i], 0.0));
    out.normalized.resize(d, 0.0);
    const double top = out.singular_values.front();
    if (top > 0.0) {
        for (std::size_t i = 0; i < d; ++i) out.normalized[i] = out.singular_values[i] / top;
    }
    return out;
}

double spectrum_tail_sum(const SpectrumReport& report, std::size_t first_rank, std::size_t last_rank) {
    double s = 0.0;
    for (std::size_t r = std::max<std::size_t>(first_rank, 1); r <= last_rank && r <= report.normalized.size(); ++r) {
        s += report.normalized[r - 1];
    }
    return s;
}

Matrix classifier_angle_matrix(const Matrix& classifier, const std::vector<std::vector<std::size_t>>& task_classes) {
    const std::size_t tasks = task_classes.size();
    Matrix out(tasks, tasks, std::numeric_limits<double>::quiet_NaN());
    for (const auto& cls : task_classes) {
        if (cls.empty()) throw ConfigError("classifier_angle_matrix: every task needs at least one classifier row");
        for (auto c : cls) {
            if (c >= classifier.rows) throw ShapeMismatch("classifier_angle_matrix: class index out of range");
        }
    }
    for (std::size_t s = 0; s < tasks; ++s) {
        for (std::size_t t = s; t < tasks; ++t) {
            double sum = 0.0;
            std::size_t pairs = 0;
            for (auto i : task_classes[s]) {
                for (auto j : task_classes[t]) {
                    if (i == j) continue;
                    sum += angle_between(classifier.row(i), classifier.row(j));
                    ++pairs;
                }
            }
            if (pairs > 0) out(s, t) = sum / static_cast<double>(pairs);
        }
    }
    return out;
}

double angular_fisher_score(const LabeledFeatureSet& set) {
    const auto stats = class_sums(set);
    if (stats.size() < 2) throw ConfigError("angular_fisher_score: needs at least two classes");

    std::map<std::size_t, UnitVector> means;
    for (const auto& [label, s] : stats) means.emplace(label, project_to_sphere(s.sum));

    double within = 0.0;
    for (std::size_t i = 0; i < set.features.size(); ++i) {
        const UnitVector u = project_to_sphere(set.features[i]);
        within += 1.0 - std::clamp(dot(u.values(), means.at(set.labels[i]).values()), -1.0, 1.0);
    }
    if (within == 0.0) return 0.0;

    FeatureVector global(stats.begin()->second.sum.size(), 0.0);
    for (const auto& [label, s] : stats)
        for (std::size_t c = 0; c < s.sum.size(); ++c) global[c] += s.sum[c];
    const UnitVector global_mean = project_to_sphere(global);
    double between = 0.0;
    for (const auto& [label, s] : stats) {
        between += static_cast<double>(s.count) *
                   (1.0 - std::clamp(dot(means.at(label).values(), global_mean.values()), -1.0, 1.0));
    }
    if (between == 0.0) return std::numeric_limits<double>::infinity();
    return within / between;
}

double large_margin_objective(std::span<const double> class_norms, double feature_norm,
                              std::span<const double> angles, std::size_t label, double target_shift) {
    std::vector<double> shifts(angles.size(), 0.0);
    shifts.at(label) = target_shift;
    return perturbed_objective(class_norms, feature_norm, angles, shifts, label);
}

double perturbed_objective(std::span<const double> class_norms, double feature_norm, std::span<const double> angles,
                           std::span<const double> shifts, std::size_t label) {
    if (class_norms.size() != angles.size() || shifts.size() != angles.size() || label >= angles.size()) {
        throw ShapeMismatch("perturbed_objective: inconsistent class counts");
    }
    std::vector<double> logits(angles.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < angles.size(); ++j) {
        logits[j] = class_norms[j] * feature_norm * std::cos(angles[j] + shifts[j]);
        top = std::max(top, logits[j]);
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l - top);
    return std::exp(logits[label] - top) / z;
}

MarginReport large_margin_inequality_check(RngStream& rng, std::size_t trials, DeviationSign sign) {
    constexpr double kPi = std::numbers::pi;
    MarginReport report;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const std::size_t k = 2 + rng.uniform_index(9);
        const std::size_t y = rng.uniform_index(k);
        std::vector<double> norms(k), angles(k), shifts(k, 0.0);
        for (auto& n : norms) n = 0.5 + 1.5 * rng.uniform();
        const double feature_norm = 0.5 + 4.5 * rng.uniform();
        for (auto& a : angles) a = kPi * rng.uniform_open();

        if (sign == DeviationSign::nonnegative) {
            // Δθ_y is the largest shift and every θ_j + Δθ_j stays ≤ π.
            const double target = rng.uniform() * (kPi - angles[y]);
            for (std::size_t j = 0; j < k; ++j) {
                if (j == y) continue;
                shifts[j] = rng.uniform() * std::min(target, kPi - angles[j]);
            }
            shifts[y] = target;
        } else if (sign == DeviationSign::nonpositive) {
            const double target = rng.uniform() * angles[y];
            for (std::size_t j = 0; j < k; ++j) {
                if (j == y) continue;
                shifts[j] = -rng.uniform() * std::min(target, angles[j]);
            }
            shifts[y] = -target;
        }

        const double lm = large_margin_objective(norms, feature_norm, angles, y, shifts[y]);
        const double pert = perturbed_objective(norms, feature_norm, angles, shifts, y);
        ++report.trials;
        if (lm == pert) ++report.exact_equalities;
        double excess = 0.0;
        switch (sign) {
            case DeviationSign::nonnegative: excess = lm - (pert + 1e-12); break;
            case DeviationSign::nonpositive: excess = (pert - 1e-12) - lm; break;
            case DeviationSign::zero: excess = std::abs(lm - pert); break;
        }
        if (excess > 0.0) {
            ++report.violations;
            report.worst_excess = std::max(report.worst_excess, excess);
        }
    }
    return report;
}

}  // namespace moca
