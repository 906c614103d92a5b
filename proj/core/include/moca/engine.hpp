#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moca/config.hpp"
#include "moca/data.hpp"
#include "moca/metrics.hpp"
#include "moca/net.hpp"
#include "moca/randkit.hpp"

namespace moca {

// Fixed-capacity reservoir of raw examples.
struct MemoryBuffer {
    std::size_t capacity = 0;
    std::vector<Example> items;
    std::uint64_t offered = 0;  // stream length N seen so far

    explicit MemoryBuffer(std::size_t cap = 0) : capacity(cap) {}
    bool empty() const noexcept { return items.empty(); }
    std::size_t size() const noexcept { return items.size(); }
};

// Reservoir update: append while under capacity, otherwise draw
// j ~ U[0, N) and replace slot j when j < M. Returns the slot written, if
// any.
std::optional<std::size_t> buffer_offer(MemoryBuffer& buffer, const Example& example, RngStream& rng);

// m distinct slots chosen uniformly (all slots when m ≥ size).
std::vector<std::size_t> buffer_sample(const MemoryBuffer& buffer, std::size_t m, RngStream& rng);

// One frozen mean feature per finished class.
struct ProxyStore {
    std::map<std::size_t, FeatureVector> means;
    std::map<std::size_t, std::size_t> counts;

    bool empty() const noexcept { return means.empty(); }
    // Averages h(x) over the given examples per class under `model`;
    // classes already stored are left untouched.
    void store(const ModelParams& model, std::span<const Example> examples);
};

struct EvalRow {
    // Percent correct per task; only tasks [0, tasks_seen) are filled.
    std::vector<std::optional<double>> per_task;
    // Percent correct over the union of the evaluated test sets.
    double overall = 0.0;
};

// Argmax over cosine logits on the test sets of the first tasks_seen tasks.
EvalRow evaluate(const ModelParams& model, const TaskStream& stream, std::size_t tasks_seen);

struct BoundaryRecord {
    std::uint64_t step = 0;  // SGD steps taken so far
    std::size_t task = 0;    // task just finished
    std::vector<std::optional<double>> accuracies;
    double seen_accuracy = 0.0;
    // Intra-class angle deviation of the finished task (new) and the tasks
    // before it (old); degrees.
    std::optional<double> old_deviation;
    std::optional<double> new_deviation;
    // Unset when fewer than two classes have been seen.
    std::optional<double> fisher;

    friend bool operator==(const BoundaryRecord&, const BoundaryRecord&) = default;
};

struct FinalDiagnostics {
    std::map<std::size_t, double> class_deviation;
    std::optional<double> old_deviation;
    std::optional<double> new_deviation;
    // Singular values of the old-class feature-gradient rows (dL/dh of
    // replayed or proxy examples from earlier tasks) collected during the
    // final task. Empty when no such rows exist.
    std::vector<double> spectrum_raw;
    std::vector<double> spectrum_normalized;
    std::size_t gradient_rows = 0;
    // T×T mean pairwise classifier angles; unset below the diagonal and
    // where a task has no distinct pair.
    std::vector<std::vector<std::optional<double>>> classifier_angles;
    std::optional<double> fisher;

    friend bool operator==(const FinalDiagnostics&, const FinalDiagnostics&) = default;
};

inline constexpr int kResultSchemaVersion = 1;

struct ExperimentResult {
    int schema_version = kResultSchemaVersion;
    RunConfig config;  // resolved, experiment view
    std::uint64_t seed = 0;
    std::string config_hash;
    std::uint64_t steps = 0;
    // accuracy[i][j]: task j after training task i; unset for j > i.
    std::vector<std::vector<std::optional<double>>> accuracy;
    double final_accuracy = 0.0;
    std::vector<BoundaryRecord> boundaries;
    FinalDiagnostics diagnostics;

    friend bool operator==(const ExperimentResult&, const ExperimentResult&) = default;
};

// Observation points for tests and tooling. Callbacks must not mutate the
// training state.
struct TrainHooks {
    // Called once per SGD step with the new-task examples used in it.
    std::function<void(std::uint64_t step, std::span<const Example* const> new_batch)> on_step;
};

struct RunOutput {
    ExperimentResult result;
    ModelParams model;
    // Rows behind diagnostics.spectrum_*; d_f columns.
    Matrix old_gradients;
};

// Synthetic data seeds derive from cfg.seed; IDX files are read from disk.
TaskStream load_stream(const RunConfig& resolved);

// Dispatches on cfg.setting. cfg must be resolved. The stream's class count
// and input dimension define the model shape.
RunOutput run_experiment(const RunConfig& resolved, const TaskStream& stream, const TrainHooks* hooks = nullptr);
// Resolves cfg, loads its stream and runs it.
RunOutput run_experiment(const RunConfig& cfg);

// Setting-specific entry points; each throws ConfigError when cfg names a
// different setting or an inapplicable variant.
RunOutput train_offline(const RunConfig& resolved, const TaskStream& stream, const TrainHooks* hooks = nullptr);
RunOutput train_online(const RunConfig& resolved, const TaskStream& stream, const TrainHooks* hooks = nullptr);
RunOutput train_proxy(const RunConfig& resolved, const TaskStream& stream, const TrainHooks* hooks = nullptr);

}  // namespace moca
