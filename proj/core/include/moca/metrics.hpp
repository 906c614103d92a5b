#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "moca/geometry.hpp"
#include "moca/net.hpp"
#include "moca/randkit.hpp"

namespace moca {

enum class Group { old_class, new_class };

struct LabeledFeatureSet {
    std::vector<FeatureVector> features;
    std::vector<std::size_t> labels;
    std::vector<Group> groups;

    void add(FeatureVector f, std::size_t label, Group g) {
        features.push_back(std::move(f));
        labels.push_back(label);
        groups.push_back(g);
    }
};

struct AngleDeviation {
    std::map<std::size_t, double> per_class;  // degrees
    std::optional<double> old_mean;
    std::optional<double> new_mean;
};

// Per class: mean angle between each member and the class mean direction
// (mean of sphere-normalized features); averaged per group.
AngleDeviation intra_class_angle_deviation(const LabeledFeatureSet& set);

struct SpectrumReport {
    std::vector<double> singular_values;  // descending
    std::vector<double> normalized;       // divided by the largest
    std::size_t sweeps = 0;
};

// Singular values of the row matrix via cyclic Jacobi on its Gram matrix.
SpectrumReport gradient_spectrum(const Matrix& rows);

// Symmetric eigenvalues by cyclic Jacobi; off-diagonal Frobenius norm is
// driven to ≤ 1e-12·max(1, ‖A‖_F). Returned in descending order.
std::vector<double> jacobi_eigenvalues(Matrix a, std::size_t* sweeps = nullptr);

// Sum of σ_i/σ_1 over 1-based ranks first..last (clamped to the spectrum).
double spectrum_tail_sum(const SpectrumReport& report, std::size_t first_rank, std::size_t last_rank);

// T×T; entry (s, t), s ≤ t, is the mean angle in degrees over pairs
// (w_i in task s, w_j in task t, i ≠ j). Entries below the diagonal and
// pair-less diagonal entries are NaN.
Matrix classifier_angle_matrix(const Matrix& classifier, const std::vector<std::vector<std::size_t>>& task_classes);

// S_w / S_b on sphere-normalized features, with
// S_w = Σ_i Σ_{f∈i} (1 - cos∠(f, μ_i)) and S_b = Σ_i n_i (1 - cos∠(μ_i, μ)).
double angular_fisher_score(const LabeledFeatureSet& set);

// Softmax probability of the target class with target angle θ_y + Δθ_y and
// other angles unchanged (large-margin form), or with every angle shifted
// by its own Δθ_j (feature perturbation form).
double large_margin_objective(std::span<const double> class_norms, double feature_norm,
                              std::span<const double> angles, std::size_t label, double target_shift);
double perturbed_objective(std::span<const double> class_norms, double feature_norm, std::span<const double> angles,
                           std::span<const double> shifts, std::size_t label);

enum class DeviationSign { nonnegative, nonpositive, zero };

struct MarginReport {
    std::size_t trials = 0;
    std::size_t violations = 0;
    std::size_t exact_equalities = 0;
    double worst_excess = 0.0;  // largest amount by which the expected inequality failed
    bool passed() const noexcept { return violations == 0; }
};

// nonnegative: checks L_LM ≤ L_pert + 1e-12; nonpositive: L_LM ≥ L_pert - 1e-12;
// zero: checks exact equality.
MarginReport large_margin_inequality_check(RngStream& rng, std::size_t trials, DeviationSign sign);

}  // namespace moca
