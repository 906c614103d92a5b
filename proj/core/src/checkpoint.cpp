#include <nlohmann/json.hpp>

#include "moca/errors.hpp"
#include "moca/result_io.hpp"

namespace moca {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "moca-lab/checkpoint";
constexpr int kCheckpointVersion = 1;

json matrix_json(const Matrix& m) { return {{"rows", m.rows}, {"cols", m.cols}, {"weight", m.data}}; }

Matrix matrix_from(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    m.data = j.at("weight").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols) throw SchemaMismatch("checkpoint: weight length disagrees with shape");
    return m;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["scale"] = ckpt.model.scale;
    json layers = json::array();
    for (const auto& layer : ckpt.model.encoder) {
        json l = matrix_json(layer.weight);
        l["bias"] = layer.bias;
        layers.push_back(std::move(l));
    }
    j["encoder"] = layers;
    j["classifier"] = matrix_json(ckpt.model.classifier);
    j["config"] = json::parse(config_to_json(ckpt.config));
    return j.dump() + "\n";
}

Checkpoint checkpoint_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaMismatch(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
        throw SchemaMismatch("not a moca-lab checkpoint");
    }
    if (j.value("version", 0) != kCheckpointVersion) {
        throw SchemaMismatch("checkpoint version " + std::to_string(j.value("version", 0)) + " is not supported");
    }
    try {
        Checkpoint c;
        c.model.scale = j.at("scale").get<double>();
        std::size_t prev_out = 0;
        for (const auto& l : j.at("encoder")) {
            DenseLayer layer;
            layer.weight = matrix_from(l);
            layer.bias = l.at("bias").get<std::vector<double>>();
            if (layer.bias.size() != layer.weight.rows) throw SchemaMismatch("checkpoint: bias length mismatch");
            if (!c.model.encoder.empty() && layer.weight.cols != prev_out) {
                throw SchemaMismatch("checkpoint: encoder layer shapes do not chain");
            }
            prev_out = layer.weight.rows;
            c.model.encoder.push_back(std::move(layer));
        }
        c.model.classifier = matrix_from(j.at("classifier"));
        if (!c.model.encoder.empty() && c.model.classifier.cols != prev_out) {
            throw SchemaMismatch("checkpoint: classifier width differs from the feature dimension");
        }
        c.config = config_from_json(j.at("config").dump());
        return c;
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("checkpoint is malformed: ") + e.what());
    } catch (const ConfigError& e) {
        throw SchemaMismatch(std::string("checkpoint config is invalid: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_text_file(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_text_file(path)); }

}  // namespace moca
