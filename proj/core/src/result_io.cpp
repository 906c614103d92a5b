#include "moca/result_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "moca/errors.hpp"

namespace moca {

using nlohmann::json;

namespace {

constexpr const char* kResultSchema = "moca-lab/result";
constexpr const char* kGradientFormat = "moca-lab/gradients";

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

json opt_row(const std::vector<std::optional<double>>& row) {
    json out = json::array();
    for (const auto& v : row) out.push_back(opt(v));
    return out;
}

std::vector<std::optional<double>> opt_row_from(const json& j) {
    std::vector<std::optional<double>> out;
    for (const auto& v : j) out.push_back(opt_from(v));
    return out;
}

json opt_matrix(const std::vector<std::vector<std::optional<double>>>& m) {
    json out = json::array();
    for (const auto& r : m) out.push_back(opt_row(r));
    return out;
}

std::vector<std::vector<std::optional<double>>> opt_matrix_from(const json& j) {
    std::vector<std::vector<std::optional<double>>> out;
    for (const auto& r : j) out.push_back(opt_row_from(r));
    return out;
}

json parse_or_schema_error(std::string_view text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaMismatch(std::string(what) + " is not valid JSON: " + e.what());
    }
}

// Shortest decimal that reads back to the same double.
std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string csv_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

std::string result_to_json(const ExperimentResult& r) {
    json j;
    j["schema"] = kResultSchema;
    j["schema_version"] = r.schema_version;
    j["config"] = json::parse(config_to_json(r.config));
    j["seed"] = r.seed;
    j["config_hash"] = r.config_hash;
    j["steps"] = r.steps;
    j["accuracy"] = opt_matrix(r.accuracy);
    j["final_accuracy"] = r.final_accuracy;
    json bounds = json::array();
    for (const auto& b : r.boundaries) {
        bounds.push_back({{"step", b.step},
                          {"task", b.task},
                          {"accuracies", opt_row(b.accuracies)},
                          {"seen_accuracy", b.seen_accuracy},
                          {"old_deviation", opt(b.old_deviation)},
                          {"new_deviation", opt(b.new_deviation)},
                          {"fisher", opt(b.fisher)}});
    }
    j["boundaries"] = bounds;
    const auto& d = r.diagnostics;
    json per_class = json::object();
    for (const auto& [label, v] : d.class_deviation) per_class[std::to_string(label)] = v;
    j["diagnostics"] = {{"class_deviation", per_class},
                        {"old_deviation", opt(d.old_deviation)},
                        {"new_deviation", opt(d.new_deviation)},
                        {"spectrum_raw", d.spectrum_raw},
                        {"spectrum_normalized", d.spectrum_normalized},
                        {"gradient_rows", d.gradient_rows},
                        {"classifier_angles", opt_matrix(d.classifier_angles)},
                        {"fisher", opt(d.fisher)}};
    return j.dump(2) + "\n";
}

ExperimentResult result_from_json(std::string_view text) {
    const json j = parse_or_schema_error(text, "result file");
    if (!j.is_object() || j.value("schema", "") != kResultSchema) {
        throw SchemaMismatch("not a moca-lab result document");
    }
    const int version = j.value("schema_version", 0);
    if (version != kResultSchemaVersion) {
        throw SchemaMismatch("result schema version " + std::to_string(version) + " is not supported (expected " +
                             std::to_string(kResultSchemaVersion) + ")");
    }
    try {
        ExperimentResult r;
        r.schema_version = version;
        r.config = config_from_json(j.at("config").dump());
        r.seed = j.at("seed").get<std::uint64_t>();
        r.config_hash = j.at("config_hash").get<std::string>();
        r.steps = j.at("steps").get<std::uint64_t>();
        r.accuracy = opt_matrix_from(j.at("accuracy"));
        r.final_accuracy = j.at("final_accuracy").get<double>();
        for (const auto& b : j.at("boundaries")) {
            BoundaryRecord rec;
            rec.step = b.at("step").get<std::uint64_t>();
            rec.task = b.at("task").get<std::size_t>();
            rec.accuracies = opt_row_from(b.at("accuracies"));
            rec.seen_accuracy = b.at("seen_accuracy").get<double>();
            rec.old_deviation = opt_from(b.at("old_deviation"));
            rec.new_deviation = opt_from(b.at("new_deviation"));
            rec.fisher = opt_from(b.at("fisher"));
            r.boundaries.push_back(std::move(rec));
        }
        const json& d = j.at("diagnostics");
        for (const auto& [label, v] : d.at("class_deviation").items()) {
            r.diagnostics.class_deviation[std::stoul(label)] = v.get<double>();
        }
        r.diagnostics.old_deviation = opt_from(d.at("old_deviation"));
        r.diagnostics.new_deviation = opt_from(d.at("new_deviation"));
        r.diagnostics.spectrum_raw = d.at("spectrum_raw").get<std::vector<double>>();
        r.diagnostics.spectrum_normalized = d.at("spectrum_normalized").get<std::vector<double>>();
        r.diagnostics.gradient_rows = d.at("gradient_rows").get<std::size_t>();
        r.diagnostics.classifier_angles = opt_matrix_from(d.at("classifier_angles"));
        r.diagnostics.fisher = opt_from(d.at("fisher"));
        return r;
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("result document is missing or mistypes a field: ") + e.what());
    } catch (const ConfigError& e) {
        throw SchemaMismatch(std::string("embedded config is invalid: ") + e.what());
    }
}

std::string result_to_csv(const ExperimentResult& r) {
    const std::size_t tasks = r.accuracy.empty() ? 0 : r.accuracy.front().size();
    std::string out = "step,task";
    for (std::size_t t = 0; t < tasks; ++t) out += ",acc_task_" + std::to_string(t);
    out += ",seen_accuracy,old_deviation,new_deviation,fisher\n";
    for (const auto& b : r.boundaries) {
        out += std::to_string(b.step) + "," + std::to_string(b.task);
        for (std::size_t t = 0; t < tasks; ++t) {
            out += ",";
            if (t < b.accuracies.size()) out += csv_cell(b.accuracies[t]);
        }
        out += "," + format_double(b.seen_accuracy) + "," + csv_cell(b.old_deviation) + "," +
               csv_cell(b.new_deviation) + "," + csv_cell(b.fisher) + "\n";
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed for " + path.string());
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_result(const ExperimentResult& result, const std::filesystem::path& dir) {
    write_text_file(dir / "result.json", result_to_json(result));
    write_text_file(dir / "result.csv", result_to_csv(result));
}

ExperimentResult read_result(const std::filesystem::path& json_path) {
    return result_from_json(read_text_file(json_path));
}

std::string gradients_to_json(const Matrix& rows) {
    json j;
    j["format"] = kGradientFormat;
    j["version"] = 1;
    j["rows"] = rows.rows;
    j["cols"] = rows.cols;
    j["data"] = rows.data;
    return j.dump() + "\n";
}

Matrix gradients_from_json(std::string_view text) {
    const json j = parse_or_schema_error(text, "gradient dump");
    if (!j.is_object() || j.value("format", "") != kGradientFormat || j.value("version", 0) != 1) {
        throw SchemaMismatch("not a moca-lab gradient dump (version 1)");
    }
    try {
        Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
        m.data = j.at("data").get<std::vector<double>>();
        if (m.data.size() != m.rows * m.cols) throw SchemaMismatch("gradient dump: data length disagrees with shape");
        return m;
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("gradient dump is malformed: ") + e.what());
    }
}

}  // namespace moca
