#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace moca {

enum class Variant { none, gaussian, vmf, doa_old, doa_new, vt, wap };
enum class Setting { offline, online, proxy };
// When new examples are offered to the replay buffer: after every training
// batch (standard ER) or all at once when a task ends.
enum class BufferInsertion { per_batch, end_of_task };

std::string_view to_string(Variant v) noexcept;
std::string_view to_string(Setting s) noexcept;
std::string_view to_string(BufferInsertion b) noexcept;
// Throw ConfigError on unknown names.
Variant parse_variant(std::string_view name);
Setting parse_setting(std::string_view name);
BufferInsertion parse_buffer_insertion(std::string_view name);

struct PerturberConfig {
    Variant variant = Variant::none;
    double lambda = 2.0;
    std::optional<double> kappa;  // required for vmf, no default
    double dropout_rate = 0.5;
    double zeta = 10.0;
    std::size_t inner_steps = 1;
    double ball_radius = 1.0;
    // Multiplier on the inner adversarial loss before the ζ step.
    double proxy_loss_weight = 10.0;
    // Fixed-angle mode: rotate the prototype feature by exactly this many
    // degrees towards the sampled direction instead of using λ.
    std::optional<double> fixed_angle;

    // True when the variant changes features at all.
    bool active() const noexcept {
        return variant != Variant::none && (fixed_angle.has_value() || lambda != 0.0);
    }
    // Variant-specific field checks; throws ConfigError.
    void validate() const;

    friend bool operator==(const PerturberConfig&, const PerturberConfig&) = default;
};

struct SyntheticSpec {
    std::size_t num_classes = 10;
    std::size_t input_dim = 32;
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 200;
    double mean_radius = 4.0;
    double sigma = 1.0;
    std::size_t num_tasks = 5;
    std::uint64_t seed = 0;

    friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

struct IdxSource {
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;

    friend bool operator==(const IdxSource&, const IdxSource&) = default;
};

// Everything one experiment needs. Optional fields are filled by
// resolve_config(); a resolved config has every optional set.
struct RunConfig {
    Setting setting = Setting::offline;
    PerturberConfig perturber;
    bool lambda_given = false;

    std::vector<std::size_t> hidden = {256, 256};
    std::size_t feature_dim = 64;
    double logit_scale = 10.0;

    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch;
    std::optional<std::size_t> replay_batch;
    double lr = 0.05;
    std::size_t buffer = 50;
    BufferInsertion buffer_insertion = BufferInsertion::per_batch;

    // "synthetic" or an IDX source.
    std::optional<IdxSource> idx;
    SyntheticSpec synthetic;

    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;  // sweep only
    std::vector<Variant> variants;     // sweep only
    std::string out = "moca_out";

    bool dump_gradients = false;
    // Population for the intra-class angle diagnostic: "train" or "test"
    // (every example of the seen tasks), or "buffer" (old group = buffer
    // contents from earlier tasks, new group = the current task's training
    // examples), or "augmented" (as "buffer", with the old group passed
    // through the run's perturbation under the current model).
    std::string diag_population = "train";

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Per-setting λ defaults (offline 2.0, online 0.8, proxy 1.0).
double default_lambda(Setting s) noexcept;

inline constexpr std::size_t kDefaultOfflineEpochs = 10;

// Fills defaults, checks variant/setting compatibility, and normalizes a
// disabled perturber (λ = 0 with no fixed angle) to variant none so that it
// is indistinguishable from the baseline. Throws ConfigError.
RunConfig resolve_config(RunConfig cfg);

// Flat key/value JSON document. Unknown keys are rejected.
RunConfig config_from_json(std::string_view text);
std::string config_to_json(const RunConfig& cfg);

// The config with run-location fields (out, sweep lists) cleared: what an
// experiment computes depends only on this view.
RunConfig experiment_view(const RunConfig& cfg);

// FNV-1a 64 over the canonical JSON of the config, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace moca
