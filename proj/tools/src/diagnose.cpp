#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "moca/engine.hpp"
#include "moca/errors.hpp"
#include "moca/metrics.hpp"
#include "moca/result_io.hpp"
#include "moca_cli/cli.hpp"

namespace moca::cli {

namespace {

using nlohmann::json;

const std::set<std::string> kDiagnostics = {"angles", "spectrum", "classifier-matrix", "fisher", "margin-check"};

enum class Artifact { result, checkpoint, gradients };

std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

Artifact detect(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error&) {
        throw SchemaMismatch("artifact is not JSON");
    }
    if (j.is_object()) {
        if (j.value("schema", "") == "moca-lab/result") return Artifact::result;
        if (j.value("format", "") == "moca-lab/checkpoint") return Artifact::checkpoint;
        if (j.value("format", "") == "moca-lab/gradients") return Artifact::gradients;
    }
    throw SchemaMismatch("artifact is neither a moca-lab result, checkpoint nor gradient dump");
}

// Features of every task under the checkpointed model; the last task is the
// new group.
LabeledFeatureSet checkpoint_features(const Checkpoint& ckpt) {
    const RunConfig cfg = resolve_config(ckpt.config);
    if (cfg.diag_population == "buffer" || cfg.diag_population == "augmented") {
        throw ConfigError("checkpoints do not store the replay buffer; read the '" + cfg.diag_population +
                          "' deviations from result.json");
    }
    const TaskStream stream = load_stream(cfg);
    LabeledFeatureSet set;
    const bool use_test = cfg.diag_population == "test";
    const std::size_t last = stream.num_tasks() - 1;
    for (std::size_t t = 0; t <= last; ++t) {
        for (const auto& ex : use_test ? stream.tasks[t].test : stream.tasks[t].train) {
            set.add(forward(ckpt.model, ex.input), ex.label, t < last ? Group::old_class : Group::new_class);
        }
    }
    return set;
}

std::string angles_csv(const std::map<std::size_t, double>& per_class, std::size_t classes_per_task,
                       std::size_t last_task, const std::optional<double>& old_mean,
                       const std::optional<double>& new_mean) {
    std::ostringstream o;
    o << "class,group,deviation_deg\n";
    for (const auto& [label, v] : per_class) {
        o << label << "," << (label / classes_per_task < last_task ? "old" : "new") << "," << fmt(v) << "\n";
    }
    o << "mean,old," << fmt(old_mean) << "\n";
    o << "mean,new," << fmt(new_mean) << "\n";
    return o.str();
}

std::string spectrum_csv(const std::vector<double>& raw, const std::vector<double>& normalized) {
    std::ostringstream o;
    o << "rank,singular_value,normalized\n";
    for (std::size_t i = 0; i < raw.size(); ++i) {
        o << i + 1 << "," << fmt(raw[i]) << "," << (i < normalized.size() ? fmt(normalized[i]) : "") << "\n";
    }
    return o.str();
}

std::string matrix_csv(const std::vector<std::vector<std::optional<double>>>& m) {
    std::ostringstream o;
    o << "task";
    for (std::size_t t = 0; t < m.size(); ++t) o << ",t" << t;
    o << "\n";
    for (std::size_t s = 0; s < m.size(); ++s) {
        o << "t" << s;
        for (const auto& v : m[s]) o << "," << fmt(v);
        o << "\n";
    }
    return o.str();
}

std::string margin_json(std::size_t trials, std::uint64_t seed, bool& all_passed) {
    json j;
    j["trials"] = trials;
    j["seed"] = seed;
    all_passed = true;
    const std::pair<const char*, DeviationSign> modes[] = {{"nonnegative", DeviationSign::nonnegative},
                                                           {"nonpositive", DeviationSign::nonpositive},
                                                           {"zero", DeviationSign::zero}};
    std::uint64_t child = 0;
    for (const auto& [name, sign] : modes) {
        RngStream rng = RngStream(seed).split(child++);
        const MarginReport rep = large_margin_inequality_check(rng, trials, sign);
        j[name] = {{"trials", rep.trials},
                   {"violations", rep.violations},
                   {"exact_equalities", rep.exact_equalities},
                   {"worst_excess", rep.worst_excess}};
        all_passed = all_passed && rep.passed();
    }
    return j.dump(2) + "\n";
}

}  // namespace

int cmd_diagnose(const DiagnoseOptions& opts, std::ostream& out, std::ostream& err) {
    if (!kDiagnostics.contains(opts.which)) {
        err << "unknown diagnostic '" << opts.which
            << "'; expected one of: angles, spectrum, classifier-matrix, fisher, margin-check\n";
        return kExitUsage;
    }
    std::string text;
    int code = kExitOk;
    try {
        if (opts.which == "margin-check") {
            if (opts.trials == 0) {
                err << "--trials must be positive\n";
                return kExitUsage;
            }
            bool passed = true;
            text = margin_json(opts.trials, opts.seed, passed);
            if (!passed) code = kExitFailure;
        } else {
            if (opts.path.empty()) {
                err << "diagnostic '" << opts.which << "' needs an artifact path\n";
                return kExitUsage;
            }
            const std::string raw = read_text_file(opts.path);
            const Artifact kind = detect(raw);
            if (opts.which == "spectrum") {
                if (kind == Artifact::gradients) {
                    const SpectrumReport rep = gradient_spectrum(gradients_from_json(raw));
                    text = spectrum_csv(rep.singular_values, rep.normalized);
                } else if (kind == Artifact::result) {
                    const ExperimentResult r = result_from_json(raw);
                    text = spectrum_csv(r.diagnostics.spectrum_raw, r.diagnostics.spectrum_normalized);
                } else {
                    throw SchemaMismatch("spectrum needs a gradient dump or a result file");
                }
            } else if (kind == Artifact::gradients) {
                throw SchemaMismatch("'" + opts.which + "' needs a result or checkpoint file");
            } else if (kind == Artifact::result) {
                const ExperimentResult r = result_from_json(raw);
                const auto& d = r.diagnostics;
                const std::size_t tasks = r.config.synthetic.num_tasks;
                if (opts.which == "angles") {
                    text = angles_csv(d.class_deviation, r.config.synthetic.num_classes / tasks, tasks - 1,
                                      d.old_deviation, d.new_deviation);
                } else if (opts.which == "classifier-matrix") {
                    text = matrix_csv(d.classifier_angles);
                } else {
                    text = "fisher\n" + fmt(d.fisher) + "\n";
                }
            } else {
                const Checkpoint ckpt = checkpoint_from_json(raw);
                const std::size_t tasks = ckpt.config.synthetic.num_tasks;
                const std::size_t per_task = ckpt.config.synthetic.num_classes / tasks;
                if (opts.which == "classifier-matrix") {
                    std::vector<std::vector<std::size_t>> parts(tasks);
                    for (std::size_t c = 0; c < ckpt.model.num_classes(); ++c) parts[c / per_task].push_back(c);
                    const Matrix m = classifier_angle_matrix(ckpt.model.classifier, parts);
                    std::vector<std::vector<std::optional<double>>> rows(m.rows,
                                                                         std::vector<std::optional<double>>(m.cols));
                    for (std::size_t i = 0; i < m.rows; ++i)
                        for (std::size_t k = 0; k < m.cols; ++k)
                            if (!std::isnan(m(i, k))) rows[i][k] = m(i, k);
                    text = matrix_csv(rows);
                } else {
                    const LabeledFeatureSet set = checkpoint_features(ckpt);
                    if (opts.which == "angles") {
                        const AngleDeviation dev = intra_class_angle_deviation(set);
                        text = angles_csv(dev.per_class, per_task, tasks - 1, dev.old_mean, dev.new_mean);
                    } else {
                        text = "fisher\n" + fmt(angular_fisher_score(set)) + "\n";
                    }
                }
            }
        }
        if (opts.out.empty()) out << text;
        else write_text_file(opts.out, text);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "diagnose failed: " << e.what() << "\n";
        return kExitFailure;
    }
    return code;
}

}  // namespace moca::cli
