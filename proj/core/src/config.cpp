#include "moca/config.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "moca/errors.hpp"

namespace moca {

using nlohmann::json;

std::string_view to_string(Variant v) noexcept {
    switch (v) {
        case Variant::none: return "none";
        case Variant::gaussian: return "gaussian";
        case Variant::vmf: return "vmf";
        case Variant::doa_old: return "doa_old";
        case Variant::doa_new: return "doa_new";
        case Variant::vt: return "vt";
        case Variant::wap: return "wap";
    }
    return "none";
}

std::string_view to_string(Setting s) noexcept {
    switch (s) {
        case Setting::offline: return "offline";
        case Setting::online: return "online";
        case Setting::proxy: return "proxy";
    }
    return "offline";
}

std::string_view to_string(BufferInsertion b) noexcept {
    return b == BufferInsertion::per_batch ? "per_batch" : "end_of_task";
}

BufferInsertion parse_buffer_insertion(std::string_view name) {
    if (name == "per_batch") return BufferInsertion::per_batch;
    if (name == "end_of_task") return BufferInsertion::end_of_task;
    throw ConfigError("unknown buffer insertion mode '" + std::string(name) + "'");
}

Variant parse_variant(std::string_view name) {
    for (Variant v : {Variant::none, Variant::gaussian, Variant::vmf, Variant::doa_old, Variant::doa_new, Variant::vt,
                      Variant::wap}) {
        if (to_string(v) == name) return v;
    }
    if (name == "er" || name == "baseline") return Variant::none;
    if (name == "doa-old") return Variant::doa_old;
    if (name == "doa-new") return Variant::doa_new;
    throw ConfigError("unknown variant '" + std::string(name) + "'");
}

Setting parse_setting(std::string_view name) {
    for (Setting s : {Setting::offline, Setting::online, Setting::proxy}) {
        if (to_string(s) == name) return s;
    }
    throw ConfigError("unknown setting '" + std::string(name) + "'");
}

double default_lambda(Setting s) noexcept {
    switch (s) {
        case Setting::offline: return 2.0;
        case Setting::online: return 0.8;
        case Setting::proxy: return 1.0;
    }
    return 2.0;
}

void PerturberConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (variant == Variant::vmf && !kappa) throw ConfigError("variant vmf requires kappa");
    if (kappa && (!(*kappa >= 0.0) || !std::isfinite(*kappa))) throw ConfigError("kappa must be finite and >= 0");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
    if (!(zeta > 0.0)) throw ConfigError("zeta must be positive");
    if (inner_steps == 0) throw ConfigError("inner_steps must be positive");
    if (!(ball_radius > 0.0)) throw ConfigError("ball_radius must be positive");
    if (!(proxy_loss_weight > 0.0)) throw ConfigError("proxy_loss_weight must be positive");
    if (fixed_angle && !(*fixed_angle >= 0.0 && *fixed_angle <= 180.0)) {
        throw ConfigError("fixed_angle must lie in [0, 180] degrees");
    }
}

RunConfig resolve_config(RunConfig cfg) {
    if (!cfg.lambda_given) cfg.perturber.lambda = default_lambda(cfg.setting);
    cfg.lambda_given = true;
    cfg.perturber.validate();

    if (cfg.setting == Setting::proxy &&
        (cfg.perturber.variant == Variant::wap || cfg.perturber.variant == Variant::doa_old)) {
        throw ConfigError("variant " + std::string(to_string(cfg.perturber.variant)) +
                          " is not applicable to the proxy setting (it needs stored raw examples)");
    }
    for (Variant v : cfg.variants) {
        if (cfg.setting == Setting::proxy && (v == Variant::wap || v == Variant::doa_old)) {
            throw ConfigError("sweep variant " + std::string(to_string(v)) +
                              " is not applicable to the proxy setting");
        }
    }

    if (!cfg.perturber.active()) {
        PerturberConfig canonical;
        canonical.lambda = default_lambda(cfg.setting);
        cfg.perturber = canonical;
    }

    if (cfg.setting == Setting::online) {
        if (cfg.epochs && *cfg.epochs != 1) throw ConfigError("the online setting is single-pass: epochs must be 1");
        cfg.epochs = 1;
        if (!cfg.batch) cfg.batch = 10;
    } else {
        if (!cfg.epochs) cfg.epochs = kDefaultOfflineEpochs;
        if (!cfg.batch) cfg.batch = 32;
    }
    if (!cfg.replay_batch) cfg.replay_batch = cfg.batch;

    if (*cfg.epochs == 0) throw ConfigError("epochs must be positive");
    if (*cfg.batch == 0) throw ConfigError("batch must be positive");
    if (*cfg.replay_batch == 0) throw ConfigError("replay_batch must be positive");
    if (!(cfg.lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(cfg.logit_scale > 0.0)) throw ConfigError("logit_scale must be positive");
    if (cfg.feature_dim == 0) throw ConfigError("feature_dim must be positive");
    for (auto h : cfg.hidden) {
        if (h == 0) throw ConfigError("hidden widths must be positive");
    }
    if (cfg.setting != Setting::proxy && cfg.buffer < *cfg.replay_batch) {
        throw ConfigError("buffer capacity must be at least the replay batch size");
    }
    const auto& syn = cfg.synthetic;
    if (syn.num_tasks == 0 || syn.num_classes == 0 || syn.num_classes % syn.num_tasks != 0) {
        throw ConfigError("number of classes must be a positive multiple of the number of tasks");
    }
    if (!(syn.sigma > 0.0)) throw ConfigError("synthetic sigma must be positive");
    if (!(syn.mean_radius >= 0.0)) throw ConfigError("synthetic radius must be >= 0");
    if (syn.input_dim == 0 || syn.train_per_class == 0 || syn.test_per_class == 0) {
        throw ConfigError("synthetic dimensions and counts must be positive");
    }
    const auto& pop = cfg.diag_population;
    if (pop != "train" && pop != "test" && pop != "buffer" && pop != "augmented") {
        throw ConfigError("diag_population must be 'train', 'test', 'buffer' or 'augmented'");
    }
    if ((pop == "buffer" || pop == "augmented") && cfg.setting == Setting::proxy) {
        throw ConfigError("diag_population '" + pop + "' needs a replay buffer; the proxy setting keeps none");
    }
    return cfg;
}

namespace {

template <typename T>
T get_as(const json& j, const char* key) {
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

std::string idx_to_string(const IdxSource& s) {
    return "idx:" + s.train_images + "," + s.train_labels + "," + s.test_images + "," + s.test_labels;
}

}  // namespace

RunConfig config_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");

    RunConfig cfg;
    for (const auto& [key, value] : doc.items()) {
        const char* k = key.c_str();
        if (value.is_null()) continue;
        if (key == "setting") cfg.setting = parse_setting(get_as<std::string>(value, k));
        else if (key == "variant") cfg.perturber.variant = parse_variant(get_as<std::string>(value, k));
        else if (key == "lambda") {
            cfg.perturber.lambda = get_as<double>(value, k);
            cfg.lambda_given = true;
        } else if (key == "kappa") cfg.perturber.kappa = get_as<double>(value, k);
        else if (key == "dropout_rate") cfg.perturber.dropout_rate = get_as<double>(value, k);
        else if (key == "zeta") cfg.perturber.zeta = get_as<double>(value, k);
        else if (key == "inner_steps") cfg.perturber.inner_steps = get_as<std::size_t>(value, k);
        else if (key == "ball_radius") cfg.perturber.ball_radius = get_as<double>(value, k);
        else if (key == "proxy_loss_weight") cfg.perturber.proxy_loss_weight = get_as<double>(value, k);
        else if (key == "fixed_angle") cfg.perturber.fixed_angle = get_as<double>(value, k);
        else if (key == "hidden") cfg.hidden = get_as<std::vector<std::size_t>>(value, k);
        else if (key == "feature_dim") cfg.feature_dim = get_as<std::size_t>(value, k);
        else if (key == "logit_scale") cfg.logit_scale = get_as<double>(value, k);
        else if (key == "epochs") cfg.epochs = get_as<std::size_t>(value, k);
        else if (key == "batch") cfg.batch = get_as<std::size_t>(value, k);
        else if (key == "replay_batch") cfg.replay_batch = get_as<std::size_t>(value, k);
        else if (key == "lr") cfg.lr = get_as<double>(value, k);
        else if (key == "buffer") cfg.buffer = get_as<std::size_t>(value, k);
        else if (key == "buffer_insertion") cfg.buffer_insertion = parse_buffer_insertion(get_as<std::string>(value, k));
        else if (key == "data") {
            const auto s = get_as<std::string>(value, k);
            if (s == "synthetic") {
                cfg.idx.reset();
            } else if (s.rfind("idx:", 0) == 0) {
                IdxSource src;
                std::vector<std::string> parts;
                std::string cur;
                for (char c : s.substr(4)) {
                    if (c == ',') {
                        parts.push_back(cur);
                        cur.clear();
                    } else {
                        cur.push_back(c);
                    }
                }
                parts.push_back(cur);
                if (parts.size() != 4) {
                    throw ConfigError("data 'idx:' needs train-images,train-labels,test-images,test-labels");
                }
                src.train_images = parts[0];
                src.train_labels = parts[1];
                src.test_images = parts[2];
                src.test_labels = parts[3];
                cfg.idx = src;
            } else {
                throw ConfigError("data must be 'synthetic' or 'idx:<4 comma-separated paths>'");
            }
        } else if (key == "classes") cfg.synthetic.num_classes = get_as<std::size_t>(value, k);
        else if (key == "synthetic_input_dim") cfg.synthetic.input_dim = get_as<std::size_t>(value, k);
        else if (key == "synthetic_train_per_class") cfg.synthetic.train_per_class = get_as<std::size_t>(value, k);
        else if (key == "synthetic_test_per_class") cfg.synthetic.test_per_class = get_as<std::size_t>(value, k);
        else if (key == "synthetic_radius") cfg.synthetic.mean_radius = get_as<double>(value, k);
        else if (key == "synthetic_sigma") cfg.synthetic.sigma = get_as<double>(value, k);
        else if (key == "tasks") cfg.synthetic.num_tasks = get_as<std::size_t>(value, k);
        else if (key == "seed") cfg.seed = get_as<std::uint64_t>(value, k);
        else if (key == "seeds") cfg.seeds = get_as<std::vector<std::uint64_t>>(value, k);
        else if (key == "variants") {
            cfg.variants.clear();
            for (const auto& v : get_as<std::vector<std::string>>(value, k)) cfg.variants.push_back(parse_variant(v));
        } else if (key == "out") cfg.out = get_as<std::string>(value, k);
        else if (key == "dump_gradients") cfg.dump_gradients = get_as<bool>(value, k);
        else if (key == "diag_population") cfg.diag_population = get_as<std::string>(value, k);
        else throw ConfigError("unknown config key '" + key + "'");
    }
    return cfg;
}

namespace {

json config_to_json_object(const RunConfig& cfg) {
    json j;
    const auto& p = cfg.perturber;
    j["setting"] = std::string(to_string(cfg.setting));
    j["variant"] = std::string(to_string(p.variant));
    if (cfg.lambda_given) j["lambda"] = p.lambda;
    j["kappa"] = p.kappa ? json(*p.kappa) : json(nullptr);
    j["dropout_rate"] = p.dropout_rate;
    j["zeta"] = p.zeta;
    j["inner_steps"] = p.inner_steps;
    j["ball_radius"] = p.ball_radius;
    j["proxy_loss_weight"] = p.proxy_loss_weight;
    j["fixed_angle"] = p.fixed_angle ? json(*p.fixed_angle) : json(nullptr);
    j["hidden"] = cfg.hidden;
    j["feature_dim"] = cfg.feature_dim;
    j["logit_scale"] = cfg.logit_scale;
    j["epochs"] = cfg.epochs ? json(*cfg.epochs) : json(nullptr);
    j["batch"] = cfg.batch ? json(*cfg.batch) : json(nullptr);
    j["replay_batch"] = cfg.replay_batch ? json(*cfg.replay_batch) : json(nullptr);
    j["lr"] = cfg.lr;
    j["buffer"] = cfg.buffer;
    j["buffer_insertion"] = std::string(to_string(cfg.buffer_insertion));
    j["data"] = cfg.idx ? idx_to_string(*cfg.idx) : std::string("synthetic");
    j["classes"] = cfg.synthetic.num_classes;
    j["synthetic_input_dim"] = cfg.synthetic.input_dim;
    j["synthetic_train_per_class"] = cfg.synthetic.train_per_class;
    j["synthetic_test_per_class"] = cfg.synthetic.test_per_class;
    j["synthetic_radius"] = cfg.synthetic.mean_radius;
    j["synthetic_sigma"] = cfg.synthetic.sigma;
    j["tasks"] = cfg.synthetic.num_tasks;
    j["seed"] = cfg.seed;
    j["seeds"] = cfg.seeds;
    std::vector<std::string> variants;
    for (Variant v : cfg.variants) variants.emplace_back(to_string(v));
    j["variants"] = variants;
    j["out"] = cfg.out;
    j["dump_gradients"] = cfg.dump_gradients;
    j["diag_population"] = cfg.diag_population;
    return j;
}

}  // namespace

std::string config_to_json(const RunConfig& cfg) { return config_to_json_object(cfg).dump(2); }

RunConfig experiment_view(const RunConfig& cfg) {
    RunConfig c = cfg;
    c.out.clear();
    c.seeds.clear();
    c.variants.clear();
    return c;
}

std::string config_hash(const RunConfig& cfg) {
    const std::string text = config_to_json_object(experiment_view(cfg)).dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace moca
