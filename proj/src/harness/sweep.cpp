#include "gzk/harness/sweep.hpp"

#include <fstream>

#include "gzk/harness/train.hpp"

namespace gzk::harness {

namespace {

void set_dotted(nlohmann::json& j, const std::string& key, const nlohmann::json& value) {
  nlohmann::json* node = &j;
  std::size_t start = 0;
  for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1) {
    node = &(*node)[key.substr(start, dot - start)];
    if (!node->is_object() && !node->is_null())
      throw std::invalid_argument("sweep: grid key '" + key + "' descends into a non-object");
  }
  (*node)[key.substr(start)] = value;
}

std::string value_text(const nlohmann::json& v) {
  if (v.is_number_float()) return est::exact_decimal(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

SweepSpec sweep_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("sweep: expected a JSON object");
  SweepSpec s;
  for (const auto& [key, value] : j.items()) {
    if (key == "study") {
      s.study = value.get<std::string>();
    } else if (key == "base") {
      s.base = value;
    } else if (key == "eval") {
      for (const auto& [k, v] : value.items())
        if (k != "pipeline" && k != "calibrated" && k != "split" && k != "limit" && k != "dataset" &&
            k != "calibration_samples")
          throw std::invalid_argument("sweep: unknown eval key '" + k + "'");
      s.eval = value;
    } else if (key == "grid") {
      for (const auto& [gk, gv] : value.items()) {
        if (!gv.is_array() || gv.empty())
          throw std::invalid_argument("sweep: grid key '" + gk + "' needs a non-empty list of values");
        s.grid.emplace_back(gk, std::vector<nlohmann::json>(gv.begin(), gv.end()));
      }
    } else if (key == "include_reference") {
      s.include_reference = value.get<bool>();
    } else {
      throw std::invalid_argument("sweep: unknown key '" + key + "'");
    }
  }
  return s;
}

std::vector<SweepPoint> expand_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir) {
  std::size_t total = 1;
  for (const auto& [k, values] : spec.grid) total *= values.size();
  std::vector<SweepPoint> out;
  for (std::size_t n = 0; n < total; ++n) {
    nlohmann::json cfg = spec.base;
    std::string params;
    std::size_t rest = n;
    std::vector<std::string> parts(spec.grid.size());
    for (std::size_t g = spec.grid.size(); g-- > 0;) {
      const auto& [key, values] = spec.grid[g];
      const auto& v = values[rest % values.size()];
      rest /= values.size();
      set_dotted(cfg, key, v);
      parts[g] = key + "=" + value_text(v);
    }
    for (const auto& p : parts) params += (params.empty() ? "" : " ") + p;
    SweepPoint point;
    point.name = "run_" + std::to_string(n);
    point.parameters = params;
    point.config = train_config_from_json(cfg);
    point.config.out_dir = (out_dir / point.name).string();
    point.config.validate();
    out.push_back(std::move(point));
  }
  return out;
}

EvalOptions sweep_eval_options(const SweepSpec& spec, const SweepPoint& point) {
  const auto& e = spec.eval;
  const auto& cfg = point.config;
  EvalOptions o;
  const Pipeline fallback = cfg.model == ModelKind::gazemap    ? Pipeline::network
                            : cfg.model == ModelKind::landmark ? Pipeline::fit
                                                               : Pipeline::lightweight;
  o.pipeline = e.contains("pipeline") ? pipeline_from_string(e["pipeline"].get<std::string>()) : fallback;
  o.calibrated = e.contains("calibrated") ? pipeline_from_string(e["calibrated"].get<std::string>()) : fallback;
  o.split = e.value("split", std::string("test"));
  o.limit = e.value("limit", std::int64_t{0});
  o.calibration_samples = e.value("calibration_samples", est::kAffineMinSamples);
  const auto run = std::filesystem::path(cfg.out_dir);
  if (cfg.model == ModelKind::lightweight) {
    o.lightweight_model = run / "lightweight.json";
    o.checkpoint = cfg.landmark_checkpoint;
  } else {
    o.checkpoint = run / "final.gzk";
  }
  o.model_id = point.name;
  return o;
}

std::vector<TableRow> run_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto points = expand_sweep(spec, out_dir);
  std::vector<TableRow> rows;
  for (const auto& p : points) {
    train(p.config);
    const auto opts = sweep_eval_options(spec, p);
    const auto data = eye::read_dataset(spec.eval.value("dataset", p.config.dataset));
    const auto report = evaluate(opts, data);
    write_report(report, std::filesystem::path(p.config.out_dir) / "report.json");
    rows.push_back(table_row(report, spec.study, p.parameters));
  }
  if (spec.include_reference)
    for (auto& r : published_reference_rows()) rows.push_back(std::move(r));
  write_table(out_dir / "results.csv", rows);
  return rows;
}

}  // namespace gzk::harness
