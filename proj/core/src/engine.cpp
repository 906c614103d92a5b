#include "moca/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "moca/dataio.hpp"
#include "moca/errors.hpp"
#include "moca/perturb.hpp"

namespace moca {

namespace {

// Child streams of the run seed, one per purpose, so enabling a variant never
// shifts unrelated random sequences.
enum StreamId : std::uint64_t {
    kDataStream = 1,
    kInitStream = 2,
    kOrderStream = 3,
    kBufferStream = 4,
    kReplayStream = 5,
    kPerturbStream = 6,
    kDropoutStream = 7,
    kDiagnosticStream = 8,
};

std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<std::vector<std::size_t>> task_classes(const TaskStream& stream) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& t : stream.tasks) out.push_back(t.classes);
    return out;
}

}  // namespace

std::optional<std::size_t> buffer_offer(MemoryBuffer& buffer, const Example& example, RngStream& rng) {
    ++buffer.offered;
    if (buffer.capacity == 0) return std::nullopt;
    if (buffer.items.size() < buffer.capacity) {
        buffer.items.push_back(example);
        return buffer.items.size() - 1;
    }
    const std::uint64_t j = rng.uniform_index(buffer.offered);
    if (j < buffer.capacity) {
        buffer.items[j] = example;
        return static_cast<std::size_t>(j);
    }
    return std::nullopt;
}

std::vector<std::size_t> buffer_sample(const MemoryBuffer& buffer, std::size_t m, RngStream& rng) {
    std::vector<std::size_t> idx(buffer.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t take = std::min(m, idx.size());
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng.uniform_index(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(take);
    return idx;
}

void ProxyStore::store(const ModelParams& model, std::span<const Example> examples) {
    std::map<std::size_t, FeatureVector> sums;
    std::map<std::size_t, std::size_t> n;
    for (const auto& ex : examples) {
        if (means.contains(ex.label)) continue;
        const FeatureVector f = forward(model, ex.input);
        auto& s = sums[ex.label];
        if (s.empty()) s.assign(f.size(), 0.0);
        for (std::size_t c = 0; c < f.size(); ++c) s[c] += f[c];
        ++n[ex.label];
    }
    for (auto& [label, s] : sums) {
        const double count = static_cast<double>(n[label]);
        for (auto& v : s) v /= count;
        means[label] = std::move(s);
        counts[label] = n[label];
    }
}

EvalRow evaluate(const ModelParams& model, const TaskStream& stream, std::size_t tasks_seen) {
    EvalRow row;
    row.per_task.assign(stream.num_tasks(), std::nullopt);
    std::size_t total = 0, total_correct = 0;
    for (std::size_t t = 0; t < tasks_seen && t < stream.num_tasks(); ++t) {
        std::size_t correct = 0;
        const auto& test = stream.tasks[t].test;
        for (const auto& ex : test) {
            const FeatureVector f = forward(model, ex.input);
            // A feature with no direction cannot be classified; count it wrong.
            if (!(norm(f) > kDegenerateNorm)) continue;
            if (argmax(cosine_logits(model, f)) == ex.label) ++correct;
        }
        row.per_task[t] = test.empty() ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
        total += test.size();
        total_correct += correct;
    }
    row.overall = total == 0 ? 0.0 : 100.0 * static_cast<double>(total_correct) / static_cast<double>(total);
    return row;
}

TaskStream load_stream(const RunConfig& resolved) {
    const std::size_t tasks = resolved.synthetic.num_tasks;
    if (resolved.idx) {
        const auto& src = *resolved.idx;
        return build_split_stream(read_idx_file(src.train_images), read_idx_file(src.train_labels),
                                  read_idx_file(src.test_images), read_idx_file(src.test_labels), tasks,
                                  resolved.synthetic.num_classes / tasks);
    }
    SyntheticSpec spec = resolved.synthetic;
    spec.seed = RngStream(resolved.seed).split(kDataStream).next_u64();
    return generate_synthetic(spec);
}

namespace {

class Trainer {
public:
    Trainer(const RunConfig& cfg, const TaskStream& stream, const TrainHooks* hooks)
        : cfg_(cfg),
          stream_(stream),
          hooks_(hooks),
          order_rng_(RngStream(cfg.seed).split(kOrderStream)),
          buffer_rng_(RngStream(cfg.seed).split(kBufferStream)),
          replay_rng_(RngStream(cfg.seed).split(kReplayStream)),
          perturb_rng_(RngStream(cfg.seed).split(kPerturbStream)),
          dropout_rng_(RngStream(cfg.seed).split(kDropoutStream)),
          buffer_(cfg.buffer) {
        if (stream.num_tasks() == 0) throw ConfigError("task stream is empty");
        InitOptions opts;
        opts.input_dim = stream.input_dim;
        opts.hidden = cfg.hidden;
        opts.feature_dim = cfg.feature_dim;
        opts.num_classes = stream.num_classes;
        opts.scale = cfg.logit_scale;
        RngStream init_rng = RngStream(cfg.seed).split(kInitStream);
        model_ = init_params(opts, init_rng);
    }

    RunOutput run() {
        const std::size_t n = *cfg_.batch;
        for (std::size_t t = 0; t < stream_.num_tasks(); ++t) {
            const auto& train = stream_.tasks[t].train;
            std::vector<std::size_t> order(train.size());
            for (std::size_t e = 0; e < *cfg_.epochs; ++e) {
                std::iota(order.begin(), order.end(), std::size_t{0});
                for (std::size_t i = order.size(); i > 1; --i) {
                    std::swap(order[i - 1], order[order_rng_.uniform_index(i)]);
                }
                for (std::size_t start = 0; start < order.size(); start += n) {
                    std::vector<const Example*> batch;
                    for (std::size_t i = start; i < std::min(start + n, order.size()); ++i) {
                        batch.push_back(&train[order[i]]);
                    }
                    step(batch, t);
                    // Each example enters the reservoir once, during its
                    // first pass, so the buffer stays a uniform sample of
                    // the stream.
                    if (cfg_.setting != Setting::proxy && cfg_.buffer_insertion == BufferInsertion::per_batch &&
                        e == 0) {
                        for (const Example* ex : batch) buffer_offer(buffer_, *ex, buffer_rng_);
                    }
                }
            }
            if (cfg_.setting == Setting::proxy) {
                proxies_.store(model_, train);
            } else if (cfg_.buffer_insertion == BufferInsertion::end_of_task) {
                for (const auto& ex : train) buffer_offer(buffer_, ex, buffer_rng_);
            }
            boundary(t);
        }
        return finish();
    }

private:
    void step(const std::vector<const Example*>& new_batch, std::size_t task) {
        GradientBundle grads = GradientBundle::zeros_like(model_);
        ForwardCache cache;
        std::vector<FeatureVector> new_features;
        new_features.reserve(new_batch.size());
        const double wn = 1.0 / static_cast<double>(new_batch.size());
        for (const Example* ex : new_batch) {
            FeatureVector f = forward(model_, ex->input, cache);
            const LossAndGrad lg = ce_loss_and_grads(model_, f, ex->label, wn, grads.classifier);
            accumulate_backward(model_, cache, lg.grad_feature, grads);
            new_features.push_back(std::move(f));
        }

        const bool final_task = task + 1 == stream_.num_tasks();
        if (cfg_.setting == Setting::proxy) {
            replay_proxies(new_batch, new_features, grads, final_task);
        } else {
            replay_buffer(new_batch, new_features, grads, task, final_task);
        }

        sgd_step_inplace(model_, grads, cfg_.lr);
        ++steps_;
        if (hooks_ != nullptr && hooks_->on_step) hooks_->on_step(steps_, new_batch);
    }

    void replay_buffer(const std::vector<const Example*>& new_batch, std::vector<FeatureVector>& new_features,
                       GradientBundle& grads, std::size_t task, bool final_task) {
        if (buffer_.empty()) return;
        const auto slots = buffer_sample(buffer_, *cfg_.replay_batch, replay_rng_);
        const std::size_t m = slots.size();
        std::vector<const Example*> old_batch;
        std::vector<ForwardCache> caches(m);
        std::vector<FeatureVector> old_features;
        for (std::size_t i = 0; i < m; ++i) {
            old_batch.push_back(&buffer_.items[slots[i]]);
            old_features.push_back(forward(model_, old_batch.back()->input, caches[i]));
        }

        PerturbContext ctx{model_, old_batch, new_batch, std::move(new_features), perturb_rng_, dropout_rng_};
        const auto perturbed = perturb_batch(cfg_.perturber, ctx, old_features);
        const bool active = cfg_.perturber.active();
        const double wm = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            const LossAndGrad lg =
                ce_loss_and_grads(model_, perturbed[i].feature, old_batch[i]->label, wm, grads.classifier);
            const FeatureVector gh = active ? compose_vjp(old_features[i], perturbed[i].direction, cfg_.perturber,
                                                          lg.grad_feature)
                                            : lg.grad_feature;
            accumulate_backward(model_, caches[i], gh, grads);
            if (final_task && old_batch[i]->task < task) record_gradient(gh, static_cast<double>(m));
        }
    }

    void replay_proxies(const std::vector<const Example*>& new_batch, std::vector<FeatureVector>& new_features,
                        GradientBundle& grads, bool final_task) {
        if (proxies_.empty()) return;
        std::vector<std::size_t> stored;
        for (const auto& [label, mean] : proxies_.means) stored.push_back(label);
        const std::size_t m = *cfg_.replay_batch;
        std::vector<std::size_t> labels(m);
        std::vector<FeatureVector> feats;
        for (auto& y : labels) {
            y = stored[replay_rng_.uniform_index(stored.size())];
            feats.push_back(proxies_.means.at(y));
        }

        PerturbContext ctx{model_, {}, new_batch, std::move(new_features), perturb_rng_, dropout_rng_};
        const auto perturbed = perturb_proxies(cfg_.perturber, ctx, feats);
        const bool active = cfg_.perturber.active();
        const double wm = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            // Stored means are constants: only the classifier learns from them.
            const LossAndGrad lg = ce_loss_and_grads(model_, perturbed[i].feature, labels[i], wm, grads.classifier);
            if (final_task) {
                const FeatureVector gh =
                    active ? compose_vjp(feats[i], perturbed[i].direction, cfg_.perturber, lg.grad_feature)
                           : lg.grad_feature;
                record_gradient(gh, static_cast<double>(m));
            }
        }
    }

    // Stores the per-example gradient (undoing the 1/m batch weight).
    void record_gradient(const FeatureVector& g, double unweight) {
        for (double v : g) gradient_rows_.push_back(v * unweight);
        ++gradient_row_count_;
    }

    LabeledFeatureSet diagnostic_set(std::size_t task) const {
        LabeledFeatureSet set;
        if (cfg_.diag_population == "buffer" || cfg_.diag_population == "augmented") {
            std::vector<const Example*> old_items, new_items;
            std::vector<FeatureVector> old_features, new_features;
            for (const auto& ex : buffer_.items) {
                if (ex.task >= task) continue;
                old_items.push_back(&ex);
                old_features.push_back(forward(model_, ex.input));
            }
            for (const auto& ex : stream_.tasks[task].train) {
                new_items.push_back(&ex);
                new_features.push_back(forward(model_, ex.input));
            }
            if (cfg_.diag_population == "augmented" && cfg_.perturber.active() && !old_items.empty()) {
                // Own streams: the diagnostic must not shift training randomness.
                RngStream rng = RngStream(cfg_.seed).split(kDiagnosticStream).split(2 * task);
                RngStream drng = RngStream(cfg_.seed).split(kDiagnosticStream).split(2 * task + 1);
                PerturbContext ctx{model_, old_items, new_items, new_features, rng, drng};
                const auto perturbed = perturb_batch(cfg_.perturber, ctx, old_features);
                for (std::size_t i = 0; i < old_features.size(); ++i) old_features[i] = perturbed[i].feature;
            }
            for (std::size_t i = 0; i < old_items.size(); ++i) {
                set.add(std::move(old_features[i]), old_items[i]->label, Group::old_class);
            }
            for (std::size_t i = 0; i < new_items.size(); ++i) {
                set.add(std::move(new_features[i]), new_items[i]->label, Group::new_class);
            }
            return set;
        }
        const bool use_test = cfg_.diag_population == "test";
        for (std::size_t s = 0; s <= task; ++s) {
            const auto& examples = use_test ? stream_.tasks[s].test : stream_.tasks[s].train;
            for (const auto& ex : examples) {
                set.add(forward(model_, ex.input), ex.label, s < task ? Group::old_class : Group::new_class);
            }
        }
        return set;
    }

    static std::optional<double> fisher_or_none(const LabeledFeatureSet& set) {
        std::vector<std::size_t> labels = set.labels;
        std::sort(labels.begin(), labels.end());
        if (std::unique(labels.begin(), labels.end()) - labels.begin() < 2) return std::nullopt;
        return angular_fisher_score(set);
    }

    void boundary(std::size_t task) {
        const EvalRow row = evaluate(model_, stream_, task + 1);
        result_.accuracy.push_back(row.per_task);

        last_set_ = diagnostic_set(task);
        const AngleDeviation dev = intra_class_angle_deviation(last_set_);
        BoundaryRecord rec;
        rec.step = steps_;
        rec.task = task;
        rec.accuracies = row.per_task;
        rec.seen_accuracy = row.overall;
        rec.old_deviation = dev.old_mean;
        rec.new_deviation = dev.new_mean;
        rec.fisher = fisher_or_none(last_set_);
        result_.boundaries.push_back(std::move(rec));
        last_deviation_ = dev;
    }

    RunOutput finish() {
        result_.config = experiment_view(cfg_);
        result_.seed = cfg_.seed;
        result_.config_hash = config_hash(cfg_);
        result_.steps = steps_;
        result_.final_accuracy = evaluate(model_, stream_, stream_.num_tasks()).overall;

        auto& diag = result_.diagnostics;
        diag.class_deviation = last_deviation_.per_class;
        diag.old_deviation = last_deviation_.old_mean;
        diag.new_deviation = last_deviation_.new_mean;
        diag.fisher = result_.boundaries.back().fisher;

        RunOutput out;
        const std::size_t d = model_.feature_dim();
        out.old_gradients = Matrix(gradient_row_count_, d);
        out.old_gradients.data = std::move(gradient_rows_);
        diag.gradient_rows = gradient_row_count_;
        if (gradient_row_count_ > 0) {
            const SpectrumReport spec = gradient_spectrum(out.old_gradients);
            diag.spectrum_raw = spec.singular_values;
            diag.spectrum_normalized = spec.normalized;
        }

        const Matrix angles = classifier_angle_matrix(model_.classifier, task_classes(stream_));
        diag.classifier_angles.assign(angles.rows, std::vector<std::optional<double>>(angles.cols));
        for (std::size_t i = 0; i < angles.rows; ++i) {
            for (std::size_t j = 0; j < angles.cols; ++j) {
                if (!std::isnan(angles(i, j))) diag.classifier_angles[i][j] = angles(i, j);
            }
        }

        out.result = std::move(result_);
        out.model = std::move(model_);
        return out;
    }

    const RunConfig& cfg_;
    const TaskStream& stream_;
    const TrainHooks* hooks_;
    RngStream order_rng_, buffer_rng_, replay_rng_, perturb_rng_, dropout_rng_;
    ModelParams model_;
    MemoryBuffer buffer_;
    ProxyStore proxies_;
    ExperimentResult result_;
    std::uint64_t steps_ = 0;
    std::vector<double> gradient_rows_;
    std::size_t gradient_row_count_ = 0;
    LabeledFeatureSet last_set_;
    AngleDeviation last_deviation_;
};

void check_resolved(const RunConfig& cfg, const TaskStream& stream) {
    if (!cfg.epochs || !cfg.batch || !cfg.replay_batch) throw ConfigError("config must be resolved before training");
    if (stream.num_classes != cfg.synthetic.num_classes || stream.num_tasks() != cfg.synthetic.num_tasks) {
        throw ConfigError("stream shape (" + std::to_string(stream.num_classes) + " classes, " +
                          std::to_string(stream.num_tasks()) + " tasks) differs from the config");
    }
}

RunOutput train_in(Setting expected, const RunConfig& cfg, const TaskStream& stream, const TrainHooks* hooks) {
    if (cfg.setting != expected) {
        throw ConfigError("config names setting " + std::string(to_string(cfg.setting)) + ", expected " +
                          std::string(to_string(expected)));
    }
    check_resolved(cfg, stream);
    return Trainer(cfg, stream, hooks).run();
}

}  // namespace

RunOutput train_offline(const RunConfig& resolved, const TaskStream& stream, const TrainHooks* hooks) {
    return train_in(Setting::offline, resolved, stream, hooks);
}

RunOutput train_online(const RunConfig& resolved, const TaskStream& stream, const TrainHooks* hooks) {
    if (resolved.epochs && *resolved.epochs != 1) throw ConfigError("the online setting is single-pass");
    return train_in(Setting::online, resolved, stream, hooks);
}

RunOutput train_proxy(const RunConfig& resolved, const TaskStream& stream, const TrainHooks* hooks) {
    const Variant v = resolved.perturber.variant;
    if (v == Variant::wap || v == Variant::doa_old) {
        throw ConfigError("variant " + std::string(to_string(v)) + " is not applicable to the proxy setting");
    }
    return train_in(Setting::proxy, resolved, stream, hooks);
}

RunOutput run_experiment(const RunConfig& resolved, const TaskStream& stream, const TrainHooks* hooks) {
    switch (resolved.setting) {
        case Setting::offline: return train_offline(resolved, stream, hooks);
        case Setting::online: return train_online(resolved, stream, hooks);
        case Setting::proxy: return train_proxy(resolved, stream, hooks);
    }
    throw ConfigError("unknown setting");
}

RunOutput run_experiment(const RunConfig& cfg) {
    const RunConfig resolved = resolve_config(cfg);
    const TaskStream stream = load_stream(resolved);
    return run_experiment(resolved, stream);
}

}  // namespace moca
