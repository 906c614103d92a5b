#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "moca/config.hpp"

namespace moca::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// One experiment: writes result.json, result.csv, checkpoint.json and the
// resolved config.json under cfg.out (plus gradients.json when
// cfg.dump_gradients), then prints the accuracy table.
int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// seeds × variants; cell results go to <out>/<variant>/seed_<s>/ with a DONE
// marker so an interrupted sweep resumes. Writes <out>/summary.csv.
// Cells run on up to `threads` workers.
int cmd_sweep(const RunConfig& cfg, std::size_t threads, std::ostream& out, std::ostream& err);

struct DiagnoseOptions {
    std::string path;   // result, checkpoint or gradient dump; unused by margin-check
    std::string which;  // angles | spectrum | classifier-matrix | fisher | margin-check
    std::size_t trials = 10000;
    std::uint64_t seed = 0;
    std::string out;  // file; stdout when empty
};
int cmd_diagnose(const DiagnoseOptions& opts, std::ostream& out, std::ostream& err);

// Worker count for sweeps: MOCA_LAB_THREADS when set to a positive integer,
// otherwise the hardware concurrency (at least 1).
std::size_t sweep_threads();

// Full argument handling for the moca_lab executable.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace moca::cli
