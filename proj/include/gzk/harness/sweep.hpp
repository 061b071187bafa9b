#pragma once

// Grid sweeps: every point of a Cartesian parameter grid is trained, evaluated
// and written as one row of a combined CSV table.
//
// Sweep file:
//   {"study": "learning_rate",
//    "base": {...TrainConfig fields...},
//    "grid": {"base_lr": [1e-3, 1e-4, 1e-5], "hourglass.n_stacks": [2, 3]},
//    "eval": {"pipeline": "fit", "split": "test", "dataset": "...", "limit": 0},
//    "include_reference": true}
// Dotted grid keys address nested config objects.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gzk/harness/config.hpp"
#include "gzk/harness/eval.hpp"

namespace gzk::harness {

struct SweepPoint {
  std::string name;        // run_<k>
  std::string parameters;  // "key=value key=value"
  TrainConfig config;
};

struct SweepSpec {
  std::string study = "sweep";
  nlohmann::json base = nlohmann::json::object();
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> grid;  // key order of the file
  nlohmann::json eval = nlohmann::json::object();
  bool include_reference = true;
};

/// Throws std::invalid_argument for unknown keys or empty value lists.
SweepSpec sweep_from_json(const nlohmann::json& j);

/// Cartesian product, last key varying fastest; each config writes to
/// out_dir/<name>.
std::vector<SweepPoint> expand_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir);

/// Evaluation of a finished run, as configured by the sweep's eval block.
EvalOptions sweep_eval_options(const SweepSpec& spec, const SweepPoint& point);

/// Trains and evaluates every point, then writes out_dir/results.csv. Wall
/// times stay in the per-run logs so the table is reproducible byte for byte.
std::vector<TableRow> run_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir);

}  // namespace gzk::harness
