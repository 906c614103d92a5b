#include "moca_cli/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "moca/engine.hpp"
#include "moca/errors.hpp"
#include "moca/result_io.hpp"

namespace moca::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void print_accuracy_table(const ExperimentResult& r, std::ostream& out) {
    out << "setting " << to_string(r.config.setting) << ", variant " << to_string(r.config.perturber.variant)
        << ", seed " << r.seed << ", config " << r.config_hash << "\n";
    out << "after\\task";
    const std::size_t tasks = r.accuracy.empty() ? 0 : r.accuracy.front().size();
    for (std::size_t t = 0; t < tasks; ++t) out << std::setw(8) << ("T" + std::to_string(t));
    out << "\n";
    out << std::fixed << std::setprecision(2);
    for (std::size_t i = 0; i < r.accuracy.size(); ++i) {
        out << std::setw(10) << ("T" + std::to_string(i));
        for (const auto& v : r.accuracy[i]) {
            if (v) out << std::setw(8) << *v;
            else out << std::setw(8) << "-";
        }
        out << "\n";
    }
    out << "final accuracy: " << r.final_accuracy << "\n";
    out.unsetf(std::ios::floatfield);
}

struct CellOutcome {
    Variant variant = Variant::none;
    std::uint64_t seed = 0;
    std::optional<double> final_accuracy;
    std::string error;
};

}  // namespace

int cmd_run(const RunConfig& cfg_in, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    try {
        cfg = resolve_config(cfg_in);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        const TaskStream stream = load_stream(cfg);
        const RunOutput run = run_experiment(cfg, stream);
        const fs::path dir = cfg.out;
        write_result(run.result, dir);
        save_checkpoint(Checkpoint{run.model, run.result.config}, dir / "checkpoint.json");
        write_text_file(dir / "config.json", config_to_json(cfg) + "\n");
        if (cfg.dump_gradients) write_text_file(dir / "gradients.json", gradients_to_json(run.old_gradients));
        print_accuracy_table(run.result, out);
        out << "wrote " << (dir / "result.json").string() << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "run failed: " << e.what() << "\n";
        return kExitFailure;
    }
}

std::size_t sweep_threads() {
    if (const char* env = std::getenv("MOCA_LAB_THREADS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

int cmd_sweep(const RunConfig& base, std::size_t threads, std::ostream& out, std::ostream& err) {
    const std::vector<std::uint64_t> seeds = base.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : base.seeds;
    const std::vector<Variant> variants =
        base.variants.empty() ? std::vector<Variant>{base.perturber.variant} : base.variants;

    // Resolve every cell up front so configuration errors stop the sweep
    // before any work starts. Cells share a seed across variants, which
    // pairs them for per-seed comparisons.
    std::vector<RunConfig> cells;
    try {
        resolve_config(base);
        for (Variant v : variants) {
            for (std::uint64_t s : seeds) {
                RunConfig c = base;
                c.seeds.clear();
                c.variants.clear();
                c.perturber.variant = v;
                c.seed = s;
                c.out = (fs::path(base.out) / std::string(to_string(v)) / ("seed_" + std::to_string(s))).string();
                cells.push_back(resolve_config(c));
            }
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    }

    std::vector<CellOutcome> outcomes(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            const RunConfig& c = cells[i];
            CellOutcome& o = outcomes[i];
            o.variant = c.perturber.variant;
            o.seed = c.seed;
            const fs::path dir = c.out;
            try {
                if (fs::exists(dir / "DONE")) {
                    o.final_accuracy = read_result(dir / "result.json").final_accuracy;
                    std::lock_guard lock(log_mutex);
                    out << "cell " << to_string(o.variant) << " seed " << o.seed << ": resumed\n";
                    continue;
                }
                const RunOutput run = run_experiment(c, load_stream(c));
                write_result(run.result, dir);
                write_text_file(dir / "config.json", config_to_json(c) + "\n");
                write_text_file(dir / "DONE", run.result.config_hash + "\n");
                o.final_accuracy = run.result.final_accuracy;
                std::lock_guard lock(log_mutex);
                out << "cell " << to_string(o.variant) << " seed " << o.seed << ": final accuracy "
                    << run.result.final_accuracy << "\n";
            } catch (const std::exception& e) {
                o.error = e.what();
                std::lock_guard lock(log_mutex);
                err << "cell " << to_string(o.variant) << " seed " << o.seed << " failed: " << e.what() << "\n";
            }
        }
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, cells.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
    }

    std::ostringstream summary;
    summary << "variant,setting,runs,mean_final_accuracy,std_final_accuracy\n";
    std::size_t failures = 0;
    for (Variant v : variants) {
        std::vector<double> finals;
        for (const auto& o : outcomes) {
            if (o.variant != v) continue;
            if (o.final_accuracy) finals.push_back(*o.final_accuracy);
            else ++failures;
        }
        double mean = 0.0, sd = 0.0;
        for (double f : finals) mean += f;
        if (!finals.empty()) mean /= static_cast<double>(finals.size());
        if (finals.size() > 1) {
            for (double f : finals) sd += (f - mean) * (f - mean);
            sd = std::sqrt(sd / static_cast<double>(finals.size() - 1));
        }
        summary << to_string(v) << "," << to_string(base.setting) << "," << finals.size() << ","
                << std::setprecision(17) << mean << "," << sd << "\n";
    }
    try {
        write_text_file(fs::path(base.out) / "summary.csv", summary.str());
    } catch (const std::exception& e) {
        err << "cannot write summary: " << e.what() << "\n";
        return kExitFailure;
    }
    out << summary.str();
    if (failures > 0) {
        err << failures << " of " << cells.size() << " cells failed\n";
        return kExitFailure;
    }
    return kExitOk;
}

namespace {

// Flag values collected before they are merged into the config document.
struct FlagValues {
    std::string config_path;
    std::map<std::string, std::string> text;  // config key -> raw flag text
};

void add_config_flags(CLI::App& cmd, FlagValues& values, bool sweep) {
    cmd.add_option("--config", values.config_path, "flat JSON config file; flags override its values");
    struct Flag {
        const char* name;
        const char* key;
        const char* help;
    };
    static const Flag flags[] = {
        {"--setting", "setting", "offline | online | proxy"},
        {"--variant", "variant", "none | gaussian | vmf | doa_old | doa_new | vt | wap"},
        {"--lambda", "lambda", "perturbation magnitude"},
        {"--kappa", "kappa", "vMF concentration (required for vmf)"},
        {"--dropout-rate", "dropout_rate", "DOA dropout rate"},
        {"--zeta", "zeta", "WAP inner learning rate"},
        {"--inner-steps", "inner_steps", "WAP inner iterations"},
        {"--ball-radius", "ball_radius", "WAP weight-delta L2 radius"},
        {"--fixed-angle", "fixed_angle", "fixed perturbation angle in degrees"},
        {"--buffer", "buffer", "memory buffer capacity"},
        {"--epochs", "epochs", "epochs per task"},
        {"--batch", "batch", "new-task batch size"},
        {"--replay-batch", "replay_batch", "replay batch size"},
        {"--lr", "lr", "SGD learning rate"},
        {"--seed", "seed", "experiment seed"},
        {"--seeds", "seeds", "comma-separated seed list (sweep)"},
        {"--data", "data", "synthetic | idx:<train-img>,<train-lbl>,<test-img>,<test-lbl>"},
        {"--out", "out", "output directory"},
    };
    for (const auto& f : flags) {
        const std::string help = (sweep && std::string(f.key) == "variant") ? "comma-separated variant list" : f.help;
        cmd.add_option_function<std::string>(
            f.name, [&values, key = std::string(f.key)](const std::string& v) { values.text[key] = v; }, help);
    }
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

double parse_number(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw ConfigError("--" + key + ": '" + v + "' is not a number");
    return d;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError("--" + key + ": '" + v + "' is not a non-negative integer");
    }
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError("--" + key + ": '" + v + "' is out of range");
    }
}

RunConfig build_config(const FlagValues& values, bool sweep) {
    json doc = json::object();
    if (!values.config_path.empty()) {
        try {
            doc = json::parse(read_text_file(values.config_path));
        } catch (const json::parse_error& e) {
            throw ConfigError("config file " + values.config_path + " is not valid JSON: " + e.what());
        } catch (const IoError& e) {
            throw ConfigError(e.what());
        }
        if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
    }
    static const std::map<std::string, char> kinds = {
        {"setting", 's'},     {"variant", 's'},      {"lambda", 'd'},       {"kappa", 'd'},
        {"dropout_rate", 'd'}, {"zeta", 'd'},        {"inner_steps", 'u'},  {"ball_radius", 'd'},
        {"fixed_angle", 'd'}, {"buffer", 'u'},       {"epochs", 'u'},       {"batch", 'u'},
        {"replay_batch", 'u'}, {"lr", 'd'},          {"seed", 'u'},         {"seeds", 'l'},
        {"data", 's'},        {"out", 's'},
    };
    for (const auto& [key, v] : values.text) {
        if (sweep && key == "variant") {
            doc["variants"] = split_commas(v);
            doc.erase("variant");
            continue;
        }
        switch (kinds.at(key)) {
            case 's': doc[key] = v; break;
            case 'd': doc[key] = parse_number(key, v); break;
            case 'u': doc[key] = parse_unsigned(key, v); break;
            case 'l': {
                std::vector<std::uint64_t> seeds;
                for (const auto& s : split_commas(v)) seeds.push_back(parse_unsigned(key, s));
                doc[key] = seeds;
                break;
            }
        }
    }
    return config_from_json(doc.dump());
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"moca_lab: memory-based continual learning with MOCA feature perturbations"};
    app.require_subcommand(1);

    FlagValues run_values, sweep_values;
    auto* run = app.add_subcommand("run", "run one experiment");
    add_config_flags(*run, run_values, false);
    auto* sweep = app.add_subcommand("sweep", "run seeds x variants and summarize");
    add_config_flags(*sweep, sweep_values, true);
    std::optional<std::size_t> threads;
    sweep->add_option("--threads", threads, "worker count (default: MOCA_LAB_THREADS or all cores)");

    DiagnoseOptions diag;
    auto* diagnose = app.add_subcommand("diagnose", "extract a diagnostic from a result, checkpoint or gradient dump");
    diagnose->add_option("which", diag.which, "angles | spectrum | classifier-matrix | fisher | margin-check")
        ->required();
    diagnose->add_option("path", diag.path, "artifact path (not needed for margin-check)");
    diagnose->add_option("--trials", diag.trials, "margin-check trials");
    diagnose->add_option("--seed", diag.seed, "margin-check seed");
    diagnose->add_option("--out", diag.out, "output file (default: stdout)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, er;
        const int code = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*run) return cmd_run(build_config(run_values, false), out, err);
        if (*sweep) {
            const RunConfig cfg = build_config(sweep_values, true);
            const std::size_t limit = threads ? std::max<std::size_t>(1, *threads) : sweep_threads();
            return cmd_sweep(cfg, limit, out, err);
        }
        if (*diagnose) return cmd_diagnose(diag, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace moca::cli
