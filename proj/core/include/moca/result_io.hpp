#pragma once

#include <filesystem>
#include <string>

#include "moca/config.hpp"
#include "moca/engine.hpp"
#include "moca/net.hpp"

namespace moca {

// Result JSON: {"schema": "moca-lab/result", "schema_version": 1, ...}.
// Doubles are written in shortest round-trip form, so parsing the text
// reproduces the result exactly. Throws SchemaMismatch on a foreign or
// newer document.
std::string result_to_json(const ExperimentResult& result);
ExperimentResult result_from_json(std::string_view text);

// One header row plus one row per task boundary. Columns: step, task,
// acc_task_<j> for every task, seen_accuracy, old_deviation, new_deviation,
// fisher. Unset values are empty cells.
std::string result_to_csv(const ExperimentResult& result);

// Writes <dir>/result.json and <dir>/result.csv, creating dir. IoError on
// failure.
void write_result(const ExperimentResult& result, const std::filesystem::path& dir);
ExperimentResult read_result(const std::filesystem::path& json_path);

// Checkpoint JSON: {"format": "moca-lab/checkpoint", "version": 1, "scale",
// "encoder": [{"rows", "cols", "weight": [row-major], "bias"}...],
// "classifier": {"rows", "cols", "weight"}, "config": {...}}.
struct Checkpoint {
    ModelParams model;
    RunConfig config;
};
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(std::string_view text);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Gradient dump: {"format": "moca-lab/gradients", "version": 1, "rows",
// "cols", "data": [row-major]}.
std::string gradients_to_json(const Matrix& rows);
Matrix gradients_from_json(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary file and renames, so readers never see a
// partial file.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace moca
