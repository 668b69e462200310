#include "deriva/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "deriva/llm.hpp"
#include "deriva/metrics.hpp"
#include "deriva/workflow.hpp"

namespace deriva::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << text;
}

std::string utc_timestamp(const char* format) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, format);
  return s.str();
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  fs::path q(p);
  return q.is_absolute() || base_dir.empty() ? q : base_dir / q;
}

/// Creates parent/stem, parent/stem-1, ... and returns the first one that did not exist.
fs::path make_unique_dir(const fs::path& parent, const std::string& stem) {
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + parent.string() + ": " + ec.message());
  for (int n = 0;; ++n) {
    auto dir = parent / (n == 0 ? stem : stem + "-" + std::to_string(n));
    if (fs::create_directory(dir, ec)) return dir;
    if (ec) throw Error(Errc::Io, "cannot create " + dir.string() + ": " + ec.message());
  }
}

/// Runs f(0..n-1) on up to `jobs` threads. f must not throw.
template <class F>
void parallel_for(std::size_t n, unsigned jobs, F f) {
  const auto threads = std::max<std::size_t>(1, std::min<std::size_t>(jobs, n));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) f(i);
  };
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
}

std::string fixed(std::optional<double> v, int precision = 4) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << *v;
  return s.str();
}

json optional_json(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

std::string indent(const std::string& text, const std::string& pad = "    ") {
  std::string out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out += pad + line + "\n";
  return out;
}

std::size_t count_untouched_changes(const Table& before, const Table& after, const oracle::MaskRecord* record) {
  if (before.row_count() != after.row_count() || before.column_count() != after.column_count())
    throw Error(Errc::ShapeMismatch, "output table shape differs from input");
  std::size_t changed = 0;
  for (std::size_t r = 0; r < before.row_count(); ++r) {
    for (std::size_t c = 0; c < before.column_count(); ++c) {
      if (record && record->truth.count({r, c})) continue;
      if (!before.at(r, c).identical(after.at(r, c))) ++changed;
    }
  }
  return changed;
}

std::size_t count_filled(const Table& before, const Table& after, std::size_t column) {
  std::size_t n = 0;
  for (std::size_t r = 0; r < before.row_count(); ++r)
    if (before.at(r, column).is_missing() && after.at(r, column).is_number()) ++n;
  return n;
}

void apply_overrides(workflow::WorkflowConfig& c, const std::string& mode, const std::string& sandbox_cmd,
                     std::optional<std::uint64_t> seed) {
  if (!mode.empty()) c.mode = workflow::mode_from_string(mode);
  if (!sandbox_cmd.empty()) c.sandbox_command = sandbox_cmd;
  if (seed) {
    c.sample_seed = *seed;
    c.mask_seed = *seed + 1;
  }
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::string spec_path;
  std::string preset;
  std::string out_path;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  oracle::SynthesisSpec spec;
  std::vector<oracle::MaskPlanEntry> plan;
  std::vector<oracle::FormulaSpec> variables;
  std::optional<std::uint64_t> mask_seed;

  auto load_preset = [&](const std::string& name, const json& j) {
    auto p = oracle::preset(name);
    spec = p.synthesis;
    variables = p.variables;
    if (j.contains("rows")) {
      // Keep the preset's missing-cell ratio when resizing.
      const auto rows = j["rows"].get<std::size_t>();
      p.missing_cells = std::max<std::size_t>(p.variables.size(), p.missing_cells * rows / spec.rows);
      spec.rows = rows;
    }
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    plan = oracle::preset_mask_plan(p);
  };

  if (!o.preset.empty()) {
    load_preset(o.preset, json::object());
  } else {
    const json j = read_json_file(o.spec_path);
    try {
      if (j.contains("preset")) {
        load_preset(j["preset"].get<std::string>(), j);
      } else {
        spec = oracle::synthesis_spec_from_json(j.contains("synthesis") ? j["synthesis"] : j);
        if (j.contains("mask_plan"))
          for (const auto& e : j["mask_plan"]) plan.push_back(oracle::mask_plan_entry_from_json(e));
        if (j.contains("variables"))
          for (const auto& v : j["variables"]) variables.push_back(oracle::formula_spec_from_json(v));
      }
      if (j.contains("mask_seed")) mask_seed = j["mask_seed"].get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw Error(Errc::InvalidSpec, o.spec_path + ": " + e.what());
    }
  }
  if (o.seed) spec.seed = *o.seed;
  const auto seed_for_mask = mask_seed.value_or(spec.seed + 1);

  const Table full = oracle::synthesize_dataset(spec);
  oracle::MultiMask masked{full, {}};
  if (!plan.empty()) masked = oracle::mask_columns(full, plan, seed_for_mask);

  json epsilons = json::object();
  for (const auto& d : spec.derived) epsilons[d.target_column] = d.epsilon;
  for (const auto& v : variables) epsilons[v.target_column] = v.epsilon;

  json columns = json::array();
  for (const auto& c : full.columns()) columns.push_back(c.name);
  json records = json::array();
  std::size_t cells = 0;
  for (const auto& r : masked.records) {
    records.push_back(oracle::to_json(r));
    cells += r.locations.size();
  }
  json manifest{{"rows", full.row_count()},   {"columns", columns},         {"synthesis", oracle::to_json(spec)},
                {"mask_seed", seed_for_mask}, {"epsilons", epsilons},       {"records", records}};

  const fs::path out_path(o.out_path);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_csv_file(masked.table, out_path.string());
  write_text(out_path.string() + ".truth.json", manifest.dump(2) + "\n");
  out << "wrote " << full.row_count() << " rows and " << cells << " masked cells to " << out_path.string() << "\n";
  out << "truth manifest: " << out_path.string() << ".truth.json\n";
  return kSuccess;
}

// ---------------------------------------------------------------------------
// truth manifests and metrics

struct TruthManifest {
  std::optional<std::size_t> rows;
  std::vector<std::string> columns;
  std::vector<oracle::MaskRecord> records;
  std::map<std::string, double> epsilons;
};

TruthManifest load_truth(const fs::path& path) {
  const json j = read_json_file(path);
  TruthManifest t;
  try {
    if (j.contains("rows")) t.rows = j["rows"].get<std::size_t>();
    if (j.contains("columns")) t.columns = j["columns"].get<std::vector<std::string>>();
    for (const auto& r : j.at("records")) t.records.push_back(oracle::mask_record_from_json(r));
    if (j.contains("epsilons")) t.epsilons = j["epsilons"].get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, path.string() + ": " + e.what());
  }
  return t;
}

void check_shape(const Table& table, const TruthManifest& truth) {
  if (truth.rows && *truth.rows != table.row_count())
    throw Error(Errc::ShapeMismatch, "imputed table has " + std::to_string(table.row_count()) + " rows, truth has " +
                                         std::to_string(*truth.rows));
  if (!truth.columns.empty()) {
    std::vector<std::string> names;
    for (const auto& c : table.columns()) names.push_back(c.name);
    if (names != truth.columns) throw Error(Errc::ShapeMismatch, "imputed table columns differ from the truth manifest");
  }
  for (const auto& r : truth.records) {
    const auto idx = table.find_column(r.column);
    if (!idx) throw Error(Errc::ShapeMismatch, "imputed table has no column '" + r.column + "'");
    for (const auto& loc : r.locations)
      if (loc.column != *idx || loc.row >= table.row_count())
        throw Error(Errc::ShapeMismatch, "masked cell of '" + r.column + "' outside the imputed table");
  }
}

// ---------------------------------------------------------------------------
// impute

struct ImputeOptions {
  std::string data_path;
  std::string config_path;
  std::string backend;
  std::string fixture;
  std::string out_dir = "runs";
  std::string mode;
  std::string sandbox_cmd;
  std::string truth_path;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
};

struct VariablePlan {
  workflow::WorkflowConfig config;
  llm::BackendConfig backend_config;
  std::unique_ptr<llm::ChatBackend> backend;
};

struct VariableRun {
  std::optional<workflow::ImputeOutput> output;
  std::string error;
  int status = kSuccess;
};

std::vector<VariablePlan> plan_variables(const ImputeOptions& o) {
  const fs::path config_path(o.config_path);
  const json cfg = read_json_file(config_path);
  const fs::path config_dir = config_path.parent_path();
  if (!cfg.is_object() || !cfg.contains("variables") || !cfg["variables"].is_array() || cfg["variables"].empty())
    throw Error(Errc::InvalidConfig, o.config_path + ": needs a non-empty \"variables\" array");

  std::vector<VariablePlan> plans;
  for (const auto& entry : cfg["variables"]) {
    VariablePlan p;
    json overrides = entry.is_object() ? entry : json::object();
    if (entry.is_string() || entry.contains("formula")) {
      const auto& f = entry.is_string() ? entry : entry["formula"];
      p.config = workflow::config_for(oracle::formula_spec_from_json(f));
    }
    if (cfg.contains("workflow")) p.config = workflow::workflow_config_from_json(cfg["workflow"], p.config);

    json backend = cfg.value("backend", json::object());
    bool fixture_from_config = backend.contains("fixture_path");
    if (overrides.contains("backend")) {
      backend.update(overrides["backend"]);
      fixture_from_config = fixture_from_config || overrides["backend"].contains("fixture_path");
    }
    if (overrides.contains("fixture_path")) {
      backend["fixture_path"] = overrides["fixture_path"];
      fixture_from_config = true;
    }
    for (const auto* k : {"formula", "backend", "fixture_path"}) overrides.erase(k);
    p.config = workflow::workflow_config_from_json(overrides, p.config);
    apply_overrides(p.config, o.mode, o.sandbox_cmd, o.seed);
    if (p.config.target_column.empty()) throw Error(Errc::InvalidConfig, "variable entry without a target column");
    p.config.validate();

    if (!o.backend.empty()) backend["kind"] = o.backend;
    if (!o.fixture.empty()) {
      backend["fixture_path"] = o.fixture;
      fixture_from_config = false;
    }
    if (backend.contains("fixture_path") && fixture_from_config)
      backend["fixture_path"] = resolve(config_dir, backend["fixture_path"].get<std::string>()).string();
    p.backend_config = llm::backend_config_from_json(backend);
    plans.push_back(std::move(p));
  }
  return plans;
}

int cmd_impute(const ImputeOptions& o, std::ostream& out, std::ostream& err) {
  auto plans = plan_variables(o);
  // Backends are built up front so a missing key or fixture fails before anything is written.
  for (auto& p : plans) p.backend = llm::make_backend(p.backend_config);
  const Table input = read_csv_file(o.data_path);
  std::optional<TruthManifest> truth;
  if (!o.truth_path.empty()) {
    truth = load_truth(o.truth_path);
    check_shape(input, *truth);
  }

  const fs::path run_dir = make_unique_dir(o.out_dir, "run-" + utc_timestamp("%Y%m%dT%H%M%SZ"));
  json manifest_vars = json::array();
  for (const auto& p : plans)
    manifest_vars.push_back({{"workflow", workflow::to_json(p.config)}, {"backend", llm::to_json(p.backend_config)}});
  json manifest{{"config_path", fs::absolute(o.config_path).string()},
                {"data_path", fs::absolute(o.data_path).string()},
                {"run_dir", fs::absolute(run_dir).string()},
                {"started_at", utc_timestamp("%Y-%m-%dT%H:%M:%SZ")},
                {"variables", manifest_vars}};
  if (truth) manifest["truth_path"] = fs::absolute(o.truth_path).string();
  write_text(run_dir / "manifest.json", manifest.dump(2) + "\n");

  std::vector<VariableRun> runs(plans.size());
  parallel_for(plans.size(), o.jobs, [&](std::size_t i) {
    try {
      runs[i].output = workflow::impute(input, plans[i].config, *plans[i].backend);
      if (!runs[i].output->run.outcome.success) runs[i].status = kMethodFailure;
    } catch (const std::exception& e) {
      runs[i].error = e.what();
      runs[i].status = kUsageError;
    }
  });

  Table merged = input;
  std::vector<metrics::VariableResult> scored;
  json summary_vars = json::object();
  std::set<std::string> used_names;
  int status = kSuccess;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& cfg = plans[i].config;
    auto& r = runs[i];
    status = std::max(status, r.status);
    std::string name = cfg.target_column;
    for (int n = 2; used_names.count(name); ++n) name = cfg.target_column + "-" + std::to_string(n);
    used_names.insert(name);

    json vs{{"target_column", cfg.target_column}, {"status", r.status}};
    if (!r.output) {
      vs["error"] = r.error;
      err << cfg.target_column << ": " << r.error << "\n";
      summary_vars[name] = vs;
      continue;
    }
    const auto& res = *r.output;
    const auto col = input.column_index(cfg.target_column);
    const auto filled = count_filled(input, res.table, col);
    vs["success"] = res.run.outcome.success;
    vs["attempts"] = res.run.attempts.size();
    vs["filled_cells"] = filled;
    if (!res.run.outcome.success) vs["reason"] = res.run.outcome.reason;

    json report = vs;
    if (truth) {
      for (const auto& rec : truth->records) {
        if (rec.column != cfg.target_column) continue;
        const auto eps = truth->epsilons.count(rec.column) ? truth->epsilons.at(rec.column) : cfg.epsilon;
        auto v = metrics::evaluate_variable(rec.column, metrics::outcomes_from(res.table, rec, eps));
        report["metrics"] = metrics::to_json(metrics::summarize_report({v}))["per_variable"][rec.column];
        scored.push_back(std::move(v));
      }
    }
    workflow::write_run_artifacts(run_dir / "variables" / name, res, report);

    if (res.run.outcome.success) {
      for (std::size_t row = 0; row < input.row_count(); ++row)
        if (input.at(row, col).is_missing() && res.table.at(row, col).is_number())
          merged.set({row, col}, res.table.at(row, col));
      out << cfg.target_column << ": success after " << res.run.attempts.size() << " attempt(s), " << filled
          << " cell(s) filled\n"
          << indent(res.run.outcome.program_text);
    } else {
      out << cfg.target_column << ": " << res.run.outcome.reason << "\n";
    }
    summary_vars[name] = vs;
  }

  write_csv_file(merged, (run_dir / "imputed.csv").string());
  json summary{{"finished_at", utc_timestamp("%Y-%m-%dT%H:%M:%SZ")}, {"exit_status", status},
               {"variables", summary_vars}};
  write_text(run_dir / "summary.json", summary.dump(2) + "\n");
  if (truth && !scored.empty()) {
    const auto report = metrics::summarize_report(scored);
    write_text(run_dir / "report.json", metrics::to_json(report).dump(2) + "\n");
    out << metrics::render_table(report, "imputation");
  }
  out << "run directory: " << run_dir.string() << "\n";
  return status;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  std::string imputed_path;
  std::string truth_path;
  std::vector<std::string> epsilons;
  std::string out_path;
  std::optional<double> penalize;
};

int cmd_evaluate(const EvaluateOptions& o, std::ostream& out) {
  const Table table = read_csv_file(o.imputed_path);
  auto truth = load_truth(o.truth_path);
  for (const auto& e : o.epsilons) {
    const auto eq = e.find('=');
    if (eq == std::string::npos) throw Error(Errc::InvalidConfig, "--epsilon expects column=value, got '" + e + "'");
    try {
      truth.epsilons[e.substr(0, eq)] = std::stod(e.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(Errc::InvalidConfig, "bad epsilon value in '" + e + "'");
    }
  }
  check_shape(table, truth);
  const auto policy = o.penalize ? metrics::AbsentPolicy::penalize_with(*o.penalize) : metrics::AbsentPolicy::exclude();
  std::vector<metrics::VariableResult> results;
  for (const auto& rec : truth.records) {
    const auto eps = truth.epsilons.count(rec.column) ? truth.epsilons.at(rec.column) : 0.01;
    results.push_back(metrics::evaluate_variable(rec.column, metrics::outcomes_from(table, rec, eps), policy));
  }
  if (results.empty()) throw Error(Errc::EmptyOutcomes, "truth manifest has no mask records");
  const auto report = metrics::summarize_report(results);

  fs::path out_path = o.out_path;
  if (out_path.empty()) out_path = fs::path(o.imputed_path).replace_extension(".report.json");
  write_text(out_path, metrics::to_json(report).dump(2) + "\n");
  out << metrics::render_table(report, "evaluation");
  out << "report: " << out_path.string() << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOptions {
  std::string suite_path;
  std::string builtin;
  std::string out_dir = "runs";
  std::string mode;
  std::string sandbox_cmd;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
};

struct Thresholds {
  std::optional<double> max_rmse;
  std::optional<double> min_accuracy;
};

Thresholds thresholds_from_json(const json& j, Thresholds base) {
  if (j.contains("max_rmse")) base.max_rmse = j["max_rmse"].get<double>();
  if (j.contains("min_accuracy")) base.min_accuracy = j["min_accuracy"].get<double>();
  return base;
}

struct BenchTuple {
  std::string name;
  oracle::FormulaSpec variable;
  oracle::SynthesisSpec synthesis;
  std::size_t mask_count = 0;
  std::uint64_t mask_seed = 0;
  json fixture;  // "canonical", a path, or an inline object
  workflow::WorkflowConfig config;
  Thresholds thresholds;
};

struct TupleResult {
  json summary;
  std::optional<metrics::VariableResult> scored;
  std::optional<workflow::ImputeOutput> output;
  bool passed = false;
};

std::vector<BenchTuple> parse_suite(const json& suite, const fs::path& suite_dir, const BenchOptions& o) {
  std::vector<BenchTuple> tuples;
  try {
    const Thresholds suite_thresholds = thresholds_from_json(suite.value("thresholds", json::object()), {});
    const json defaults = suite.value("workflow", json::object());
    for (const auto& t : suite.at("tuples")) {
      BenchTuple b;
      b.variable = oracle::formula_spec_from_json(t.at("variable"));
      b.name = t.value("name", b.variable.target_column);
      std::size_t default_count = 10;
      if (t.contains("preset")) {
        const auto p = oracle::preset(t["preset"].get<std::string>());
        b.synthesis = p.synthesis;
        default_count = std::max<std::size_t>(1, p.missing_cells / p.variables.size());
      } else {
        b.synthesis = oracle::synthesis_spec_from_json(t.at("synthesis"));
      }
      if (t.contains("rows")) b.synthesis.rows = t["rows"].get<std::size_t>();
      if (t.contains("seed")) b.synthesis.seed = t["seed"].get<std::uint64_t>();
      const json mask = t.value("mask", json::object());
      b.mask_count = mask.value("count", default_count);
      b.mask_seed = mask.value("seed", b.synthesis.seed + 1);
      b.fixture = t.value("fixture", json("canonical"));
      if (b.fixture.is_string() && b.fixture.get<std::string>() != "canonical")
        b.fixture = resolve(suite_dir, b.fixture.get<std::string>()).string();
      b.config = workflow::config_for(b.variable);
      b.config = workflow::workflow_config_from_json(defaults, b.config);
      b.config = workflow::workflow_config_from_json(t.value("workflow", json::object()), b.config);
      apply_overrides(b.config, o.mode, o.sandbox_cmd, o.seed);
      b.config.validate();
      b.thresholds = thresholds_from_json(t.value("thresholds", json::object()), suite_thresholds);
      tuples.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("bench suite: ") + e.what());
  }
  if (tuples.empty()) throw Error(Errc::InvalidConfig, "bench suite has no tuples");
  return tuples;
}

std::unique_ptr<llm::ChatBackend> tuple_backend(const BenchTuple& t) {
  if (t.fixture.is_object()) return std::make_unique<llm::ScriptedBackend>(llm::ScriptedBackend::from_json(t.fixture));
  const auto f = t.fixture.get<std::string>();
  if (f == "canonical") return std::make_unique<llm::ScriptedBackend>(canonical_fixture(t.variable));
  return std::make_unique<llm::ScriptedBackend>(llm::ScriptedBackend::from_file(f));
}

/// RMSE of filling every masked cell with the mean of the column's remaining numbers.
std::optional<double> mean_baseline_rmse(const Table& masked, const oracle::MaskRecord& record) {
  const auto col = masked.column_index(record.column);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < masked.row_count(); ++r) {
    if (masked.at(r, col).is_number()) {
      sum += masked.at(r, col).as_number();
      ++n;
    }
  }
  if (n == 0 || record.locations.empty()) return std::nullopt;
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (const auto& [loc, truth] : record.truth) sq += (mean - truth) * (mean - truth);
  return std::sqrt(sq / static_cast<double>(record.truth.size()));
}

TupleResult run_tuple(const BenchTuple& t) {
  TupleResult res;
  json s{{"name", t.name}, {"variable", t.variable.target_column}, {"formula", oracle::to_string(t.variable.id)},
         {"rows", t.synthesis.rows}};
  std::vector<std::string> failures;
  try {
    const Table full = oracle::synthesize_dataset(t.synthesis);
    const auto m = oracle::mask_column(full, t.variable.target_column, oracle::MaskAmount::of_count(t.mask_count),
                                       t.mask_seed, t.variable.warmup_rows);
    s["masked_cells"] = m.record.locations.size();
    s["baseline_rmse"] = optional_json(mean_baseline_rmse(m.table, m.record));
    auto backend = tuple_backend(t);
    auto out = workflow::impute(m.table, t.config, *backend);
    const auto untouched = count_untouched_changes(m.table, out.table, &m.record);
    auto v = metrics::evaluate_variable(t.name, metrics::outcomes_from(out.table, m.record, t.config.epsilon));
    s["success"] = out.run.outcome.success;
    s["attempts"] = out.run.attempts.size();
    s["accuracy"] = optional_json(v.accuracy);
    s["find_accuracy"] = optional_json(v.find_accuracy);
    s["rmse"] = optional_json(v.rmse);
    s["excluded_cells"] = v.excluded_count;
    s["untouched_cells_modified"] = untouched;
    if (!out.run.outcome.success) failures.push_back(out.run.outcome.reason);
    if (untouched != 0) failures.push_back(std::to_string(untouched) + " non-masked cells modified");
    if (t.thresholds.max_rmse && (!v.rmse || *v.rmse > *t.thresholds.max_rmse))
      failures.push_back("rmse " + fixed(v.rmse, 12) + " above " + fixed(t.thresholds.max_rmse, 12));
    if (t.thresholds.min_accuracy && (!v.accuracy || *v.accuracy < *t.thresholds.min_accuracy))
      failures.push_back("accuracy " + fixed(v.accuracy) + " below " + fixed(t.thresholds.min_accuracy));
    res.scored = std::move(v);
    res.output = std::move(out);
  } catch (const std::exception& e) {
    failures.push_back(e.what());
  }
  res.passed = failures.empty();
  s["failures"] = failures;
  s["passed"] = res.passed;
  res.summary = std::move(s);
  return res;
}

std::string bench_table(const std::vector<TupleResult>& results) {
  std::size_t w = 5;
  for (const auto& r : results) w = std::max(w, r.summary["name"].get<std::string>().size());
  std::ostringstream s;
  s << std::left << std::setw(static_cast<int>(w) + 2) << "tuple" << std::right << std::setw(7) << "cells"
    << std::setw(10) << "accuracy" << std::setw(12) << "rmse" << std::setw(14) << "mean rmse" << "  status\n";
  auto num = [](const json& j) { return j.is_number() ? std::optional<double>(j.get<double>()) : std::nullopt; };
  for (const auto& r : results) {
    const auto& j = r.summary;
    s << std::left << std::setw(static_cast<int>(w) + 2) << j["name"].get<std::string>() << std::right
      << std::setw(7) << j.value("masked_cells", std::size_t{0}) << std::setw(10) << fixed(num(j.value("accuracy", json())))
      << std::setw(12) << fixed(num(j.value("rmse", json()))) << std::setw(14)
      << fixed(num(j.value("baseline_rmse", json()))) << "  " << (r.passed ? "PASS" : "FAIL") << "\n";
  }
  return s.str();
}

int cmd_bench(const BenchOptions& o, std::ostream& out, std::ostream& err) {
  json suite;
  fs::path suite_dir;
  if (!o.builtin.empty()) {
    suite = builtin_suite(o.builtin);
  } else {
    suite = read_json_file(o.suite_path);
    suite_dir = fs::path(o.suite_path).parent_path();
  }
  const auto name = suite.value("name", std::string("suite"));
  const auto tuples = parse_suite(suite, suite_dir, o);

  std::vector<TupleResult> results(tuples.size());
  parallel_for(tuples.size(), o.jobs, [&](std::size_t i) { results[i] = run_tuple(tuples[i]); });

  const fs::path bench_dir = make_unique_dir(o.out_dir, "bench-" + name + "-" + utc_timestamp("%Y%m%dT%H%M%SZ"));
  json tuple_json = json::array();
  std::vector<metrics::VariableResult> scored;
  bool all_passed = true;
  std::set<std::string> used;
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto& r = results[i];
    tuple_json.push_back(r.summary);
    all_passed = all_passed && r.passed;
    if (r.scored) scored.push_back(*r.scored);
    if (!r.passed) err << "FAIL " << tuples[i].name << ": " << r.summary["failures"].dump() << "\n";
    if (r.output) {
      std::string dir = tuples[i].name;
      std::replace(dir.begin(), dir.end(), '/', '_');
      for (int n = 2; used.count(dir); ++n) dir = tuples[i].name + "-" + std::to_string(n);
      used.insert(dir);
      workflow::write_run_artifacts(bench_dir / "tuples" / dir, *r.output, r.summary);
    }
  }
  json report{{"suite", name}, {"tuples", tuple_json}, {"passed", all_passed}};
  report["summary"] = scored.empty() ? json(nullptr) : metrics::to_json(metrics::summarize_report(scored))["summary"];
  write_text(bench_dir / "report.json", report.dump(2) + "\n");

  std::size_t passed = 0;
  for (const auto& r : results) passed += r.passed ? 1 : 0;
  out << bench_table(results);
  out << "bench " << name << ": " << passed << "/" << results.size() << " tuples passed\n";
  out << "report: " << (bench_dir / "report.json").string() << "\n";
  return all_passed ? kSuccess : kMethodFailure;
}

// ---------------------------------------------------------------------------
// inspect

std::optional<std::string> read_optional(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void inspect_one(const fs::path& dir, std::ostream& out) {
  auto program = read_optional(dir / "final_program.dsl");
  if (!program) program = read_optional(dir / "final_program.txt");
  const auto attempts_text = read_optional(dir / "attempts.json");
  if (!program && !attempts_text)
    throw Error(Errc::MissingArtifact, dir.string() + " has neither a final program nor attempts.json");

  out << "== " << dir.filename().string() << " ==\n";
  if (program) {
    out << "program:\n" << indent(*program);
  } else {
    out << "program: none (unable to impute)\n";
  }
  if (auto d = read_optional(dir / "description.txt")) out << "description:\n" << indent(*d);
  if (!attempts_text) return;

  json attempts;
  try {
    attempts = json::parse(*attempts_text);
  } catch (const json::exception& e) {
    throw Error(Errc::MissingArtifact, (dir / "attempts.json").string() + " is unreadable: " + e.what());
  }
  out << "attempts: " << attempts.size() << "\n";
  for (const auto& a : attempts) {
    out << "  #" << a.value("index", 0) + 1 << " ";
    if (a.contains("failure") && a["failure"].is_string()) {
      out << "failed: " << a["failure"].get<std::string>() << "\n";
    } else {
      std::size_t matched = 0, total = 0;
      for (const auto& c : a["verdict"]["cells"]) {
        ++total;
        matched += c.value("matched", false) ? 1 : 0;
      }
      out << (a["verdict"].value("all_matched", false) ? "matched " : "mismatched ") << matched << "/" << total
          << " cells\n";
    }
    if (a.contains("diagnosis") && a["diagnosis"].is_string())
      out << "    diagnosis:\n" << indent(a["diagnosis"].get<std::string>(), "      ");
    if (a.contains("program_source") && !a["program_source"].get<std::string>().empty())
      out << "    program:\n" << indent(a["program_source"].get<std::string>(), "      ");
  }
}

int cmd_inspect(const std::string& run_dir, std::ostream& out) {
  const fs::path dir(run_dir);
  if (!fs::is_directory(dir)) throw Error(Errc::MissingArtifact, run_dir + " is not a directory");
  std::vector<fs::path> targets;
  for (const auto* sub : {"variables", "tuples"}) {
    if (!fs::is_directory(dir / sub)) continue;
    for (const auto& e : fs::directory_iterator(dir / sub))
      if (e.is_directory()) targets.push_back(e.path());
  }
  std::sort(targets.begin(), targets.end());
  if (targets.empty()) targets.push_back(dir);
  for (const auto& t : targets) inspect_one(t, out);
  return kSuccess;
}

}  // namespace

// ---------------------------------------------------------------------------

std::map<std::string, std::vector<std::string>> canonical_fixture(const oracle::FormulaSpec& spec) {
  auto src = oracle::canonical_source(spec);
  while (!src.empty() && src.back() == '\n') src.pop_back();
  const std::string marker(llm::kFormulaMarker);
  const std::string block = marker + "\n" + src + "\n" + marker;
  std::string inputs;
  for (const auto& c : spec.input_columns) inputs += (inputs.empty() ? "" : ", ") + c;
  return {{"domain_sketch",
           {"Step 1 Finding Missing value: " + spec.target_column + " is missing.\nStep 2 Finding related Columns: " +
            inputs + ".\nStep 7\n" + block}},
          {"code_gen", {block}},
          {"summarizer", {std::string(oracle::to_string(spec.id)) + " for " + spec.target_column + ".\n" + block}}};
}

nlohmann::json builtin_suite(std::string_view name) {
  if (name != "zero-rmse") throw Error(Errc::InvalidConfig, "unknown builtin suite '" + std::string(name) + "'");
  json tuples = json::array();
  auto add = [&](const char* preset, const char* formula) {
    tuples.push_back({{"name", std::string(preset) + "/" + formula}, {"preset", preset}, {"variable", formula}});
  };
  for (const auto* f : {"SMA5", "EMA5", "CCI5", "ROC5", "MOM10"}) add("bajaj", f);
  for (const auto* f : {"BMI_WEIGHT", "BMI_HEIGHT", "BMI"}) add("bmi", f);
  for (const auto* f : {"SUPERMARKET_TOTAL", "SUPERMARKET_TAX5", "SUPERMARKET_UNIT_PRICE", "SUPERMARKET_QUANTITY"})
    add("supermarket", f);
  return {{"name", "zero-rmse"}, {"thresholds", {{"max_rmse", 1e-9}, {"min_accuracy", 1.0}}}, {"tuples", tuples}};
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Derived missing value imputation with sketch-guided formula synthesis", "deriva"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Synthesize a dataset, mask it and write a truth manifest");
  auto* synth_source = s->add_option_group("source");
  synth_source->add_option("spec", synth.spec_path, "Synthesis spec JSON")->check(CLI::ExistingFile);
  synth_source->add_option("--preset", synth.preset, "Dataset preset")
      ->check(CLI::IsMember(oracle::preset_names()));
  synth_source->require_option(1);
  s->add_option("--out,-o", synth.out_path, "Output CSV; the manifest goes to <out>.truth.json")->required();
  s->add_option("--seed", synth.seed, "Override the synthesis seed");

  ImputeOptions imp;
  auto* i = app.add_subcommand("impute", "Impute the configured variables of a CSV file");
  i->add_option("data", imp.data_path, "Input CSV with missing cells")->required()->check(CLI::ExistingFile);
  i->add_option("--config,-c", imp.config_path, "Imputation config JSON")->required()->check(CLI::ExistingFile);
  i->add_option("--backend", imp.backend, "Backend kind")->check(CLI::IsMember({"scripted", "http"}));
  i->add_option("--fixture", imp.fixture, "Scripted backend fixture JSON");
  i->add_option("--seed", imp.seed, "Sampling seed for every variable");
  i->add_option("--jobs,-j", imp.jobs, "Variables imputed in parallel")->check(CLI::PositiveNumber);
  i->add_option("--out-dir", imp.out_dir, "Parent of the run directory")->capture_default_str();
  i->add_option("--mode", imp.mode, "Execution mode")->check(CLI::IsMember({"dsl", "sandbox"}));
  i->add_option("--sandbox-cmd", imp.sandbox_cmd, "Sandbox command template");
  i->add_option("--truth", imp.truth_path, "Truth manifest; adds metrics to the run")->check(CLI::ExistingFile);

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "Score an imputed CSV against a truth manifest");
  e->add_option("imputed", ev.imputed_path, "Imputed CSV")->required()->check(CLI::ExistingFile);
  e->add_option("truth", ev.truth_path, "Truth manifest JSON")->required()->check(CLI::ExistingFile);
  e->add_option("--epsilon", ev.epsilons, "column=value tolerance override (repeatable)");
  e->add_option("--out,-o", ev.out_path, "report.json path (default <imputed>.report.json)");
  e->add_option("--penalize", ev.penalize, "Count unimputed cells as this value in RMSE");

  BenchOptions bench;
  auto* b = app.add_subcommand("bench", "Run a benchmark suite with scripted backends");
  auto* bench_source = b->add_option_group("source");
  bench_source->add_option("suite", bench.suite_path, "Suite JSON")->check(CLI::ExistingFile);
  bench_source->add_option("--builtin", bench.builtin, "Builtin suite")->check(CLI::IsMember({"zero-rmse"}));
  bench_source->require_option(1);
  b->add_option("--jobs,-j", bench.jobs, "Tuples run in parallel")->check(CLI::PositiveNumber);
  b->add_option("--out-dir", bench.out_dir, "Parent of the bench directory")->capture_default_str();
  b->add_option("--mode", bench.mode, "Execution mode")->check(CLI::IsMember({"dsl", "sandbox"}));
  b->add_option("--sandbox-cmd", bench.sandbox_cmd, "Sandbox command template");
  b->add_option("--seed", bench.seed, "Sampling seed for every tuple");

  std::string inspect_dir;
  auto* n = app.add_subcommand("inspect", "Print the program, description and attempt history of a run");
  n->add_option("run_dir", inspect_dir, "Run directory or one of its variable directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*i) return cmd_impute(imp, out, err);
    if (*e) return cmd_evaluate(ev, out);
    if (*b) return cmd_bench(bench, out, err);
    if (*n) return cmd_inspect(inspect_dir, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsageError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsageError;
  }
  return kUsageError;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"deriva"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace deriva::cli
