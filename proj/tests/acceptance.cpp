// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "deriva/cli.hpp"
#include "deriva/dsl.hpp"
#include "deriva/metrics.hpp"
#include "deriva/oracle.hpp"
#include "deriva/random.hpp"
#include "deriva/table.hpp"
#include "deriva/workflow.hpp"

using namespace deriva;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kEquivalenceTol = 1e-9;
constexpr double kEquivalenceSeconds = 10.0;
constexpr std::size_t kEquivalenceRows = 1000;
constexpr int kEquivalenceSeeds = 5;
constexpr double kZeroRmseTol = 1e-9;
constexpr double kZeroRmseSeconds = 30.0;
constexpr double kSummaryTol = 0.00005;
constexpr double kHandRmseTol = 1e-9;
constexpr int kCloseMatchTriples = 10000;
constexpr int kMetricSets = 1000;
constexpr int kAstCount = 200;
constexpr int kCsvTables = 50;

const std::string kSource = DERIVA_SOURCE_DIR;

struct Result {
  bool ok = true;
  std::string detail;

  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::size_t count_label(const std::vector<llm::ChatExchange>& t, const std::string& label) {
  return static_cast<std::size_t>(
      std::count_if(t.begin(), t.end(), [&](const auto& e) { return e.step_label == label; }));
}

/// Cells outside `record` that differ bitwise between the two tables.
std::size_t untouched_changes(const Table& before, const Table& after, const oracle::MaskRecord& record) {
  if (before.row_count() != after.row_count() || before.column_count() != after.column_count())
    return before.row_count() * before.column_count() + 1;
  std::size_t n = 0;
  for (std::size_t r = 0; r < before.row_count(); ++r)
    for (std::size_t c = 0; c < before.column_count(); ++c)
      if (!record.truth.count({r, c}) && !before.at(r, c).identical(after.at(r, c))) ++n;
  return n;
}

// Shared across criteria: every scripted end-to-end run adds to this.
std::size_t g_end_to_end_runs = 0;
std::size_t g_untouched_modified = 0;

// ---------------------------------------------------------------------------

Result ac1_equivalence() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  std::set<oracle::FormulaId> covered;
  double worst = 0.0;
  std::size_t min_rows = SIZE_MAX;
  for (const auto& name : oracle::preset_names()) {
    auto p = oracle::preset(name);
    std::vector<oracle::FormulaSpec> specs = p.variables;
    specs.insert(specs.end(), p.synthesis.derived.begin(), p.synthesis.derived.end());
    for (int s = 0; s < kEquivalenceSeeds; ++s) {
      p.synthesis.rows = kEquivalenceRows + 24;
      p.synthesis.seed = 1000 + static_cast<std::uint64_t>(s);
      const auto table = oracle::synthesize_dataset(p.synthesis);
      for (const auto& spec : specs) {
        const auto prog = oracle::canonical_program(spec);
        std::size_t rows = 0;
        for (std::size_t row = spec.warmup_rows; row < table.row_count(); ++row) {
          double want = 0.0;
          try {
            want = oracle::oracle_value(spec, table, row);
          } catch (const Error&) {
            continue;  // oracle undefined here
          }
          double got = 0.0;
          try {
            got = dsl::evaluate_cell(prog, table, row);
          } catch (const Error& e) {
            r.fail(std::string(oracle::to_string(spec.id)) + " row " + std::to_string(row) + ": " + e.what());
            continue;
          }
          worst = std::max(worst, std::fabs(got - want));
          ++rows;
        }
        min_rows = std::min(min_rows, rows);
        covered.insert(spec.id);
      }
    }
  }
  const double secs = seconds_since(t0);
  if (covered.size() != oracle::all_formula_ids().size())
    r.fail("only " + std::to_string(covered.size()) + " formulas covered");
  if (worst > kEquivalenceTol) r.fail("max |diff| " + num(worst) + " > " + num(kEquivalenceTol));
  if (min_rows < kEquivalenceRows) r.fail("only " + std::to_string(min_rows) + " rows for some formula");
  if (secs >= kEquivalenceSeconds) r.fail("took " + num(secs) + " s");
  if (r.ok)
    r.detail = std::to_string(covered.size()) + " formulas x " + std::to_string(kEquivalenceSeeds) + " seeds, >= " +
               std::to_string(min_rows) + " rows each, max |diff| " + num(worst) + ", " + num(secs) + " s";
  return r;
}

Result ac2_zero_rmse() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::pair<std::string, std::vector<oracle::FormulaId>>> groups{
      {"bajaj",
       {oracle::FormulaId::SMA5, oracle::FormulaId::EMA5, oracle::FormulaId::CCI5, oracle::FormulaId::ROC5,
        oracle::FormulaId::MOM10}},
      {"bmi", {oracle::FormulaId::BMI_WEIGHT, oracle::FormulaId::BMI_HEIGHT, oracle::FormulaId::BMI}},
      {"supermarket",
       {oracle::FormulaId::SUPERMARKET_TOTAL, oracle::FormulaId::SUPERMARKET_TAX5,
        oracle::FormulaId::SUPERMARKET_UNIT_PRICE, oracle::FormulaId::SUPERMARKET_QUANTITY}}};
  double worst = 0.0;
  std::size_t variables = 0, cells = 0;
  for (const auto& [name, ids] : groups) {
    const auto p = oracle::preset(name);
    const auto full = oracle::synthesize_dataset(p.synthesis);
    const auto per_variable = p.missing_cells / p.variables.size();
    std::uint64_t seed = 7;
    for (auto id : ids) {
      const auto spec = oracle::default_spec(id);
      const auto m = oracle::mask_column(full, spec.target_column, oracle::MaskAmount::of_count(per_variable), seed++,
                                         spec.warmup_rows);
      llm::ScriptedBackend backend(cli::canonical_fixture(spec));
      const auto label = name + "/" + std::string(oracle::to_string(id));
      try {
        const auto out = workflow::impute(m.table, workflow::config_for(spec), backend);
        ++g_end_to_end_runs;
        g_untouched_modified += untouched_changes(m.table, out.table, m.record);
        if (!out.run.outcome.success) {
          r.fail(label + ": " + out.run.outcome.reason);
          continue;
        }
        const auto v = metrics::evaluate_variable(label, metrics::outcomes_from(out.table, m.record, spec.epsilon));
        if (!v.rmse || v.excluded_count != 0) {
          r.fail(label + ": " + std::to_string(v.excluded_count) + " cells left unimputed");
          continue;
        }
        worst = std::max(worst, *v.rmse);
        if (*v.rmse > kZeroRmseTol) r.fail(label + ": rmse " + num(*v.rmse));
        ++variables;
        cells += v.cell_count;
      } catch (const Error& e) {
        r.fail(label + ": " + e.what());
      }
    }
  }
  const double secs = seconds_since(t0);
  if (secs >= kZeroRmseSeconds) r.fail("took " + num(secs) + " s");
  if (r.ok)
    r.detail = std::to_string(variables) + " variables, " + std::to_string(cells) + " masked cells, max rmse " +
               num(worst) + ", " + num(secs) + " s";
  return r;
}

Result ac3_summary_rule() {
  Result r;
  struct Row {
    std::string dataset;
    std::vector<double> per_variable;
    double printed;
  };
  const std::vector<Row> rows{{"Bajaj", {0.0, 0.0, 0.0, 0.0, 0.0, 8.7993}, 1.4666},
                              {"Bmi", {0.0, 0.0, 0.0}, 0.0},
                              {"Supermarket", {0.0, 0.0, 0.0, 0.0, 0.0, 0.7749}, 0.1292},
                              {"GreenTrip", {0.7329, 0.5507, 0.3647, 0.5720}, 0.5551}};
  std::ostringstream d;
  for (const auto& row : rows) {
    std::vector<metrics::VariableResult> results;
    for (std::size_t i = 0; i < row.per_variable.size(); ++i)
      results.push_back(metrics::rmse_only("v" + std::to_string(i), row.per_variable[i]));
    const auto s = metrics::summarize_report(results).summary.rmse;
    if (!s || std::fabs(*s - row.printed) > kSummaryTol) {
      r.fail(row.dataset + " summary " + (s ? num(*s, 8) : "absent") + " vs " + num(row.printed, 8));
      continue;
    }
    d << row.dataset << " " << std::fixed << std::setprecision(5) << *s << " ";
  }
  if (r.ok) r.detail = d.str() + "(within " + num(kSummaryTol) + ")";
  return r;
}

Result ac4_reflect_loop() {
  Result r;
  auto p = oracle::preset("bajaj");
  p.synthesis.rows = 200;
  const auto full = oracle::synthesize_dataset(p.synthesis);
  const auto spec = oracle::default_spec(oracle::FormulaId::SMA5);
  const auto m = oracle::mask_column(full, "sma5", oracle::MaskAmount::of_count(10), 3, spec.warmup_rows);
  auto config = workflow::config_for(spec);
  config.retry_limit = 3;

  auto off = llm::ScriptedBackend::from_file(kSource + "/fixtures/sma5_off_by_one.json");
  const auto a = workflow::impute(m.table, config, off);
  ++g_end_to_end_runs;
  g_untouched_modified += untouched_changes(m.table, a.table, m.record);
  const auto reflections = count_label(a.run.transcript, "reflector");
  if (!a.run.outcome.success) r.fail("off-by-one fixture did not succeed: " + a.run.outcome.reason);
  if (a.run.attempts.size() != 2) r.fail("off-by-one fixture took " + std::to_string(a.run.attempts.size()) + " attempts");
  if (reflections != 1) r.fail("off-by-one fixture made " + std::to_string(reflections) + " reflector calls");

  auto wrong = llm::ScriptedBackend::from_file(kSource + "/fixtures/sma5_four_wrong.json");
  const auto b = workflow::impute(m.table, config, wrong);
  ++g_end_to_end_runs;
  g_untouched_modified += untouched_changes(m.table, b.table, m.record);
  if (b.run.outcome.success) r.fail("four-wrong fixture succeeded");
  if (b.run.outcome.reason.find("unable to impute") == std::string::npos)
    r.fail("four-wrong reason lacks 'unable to impute': " + b.run.outcome.reason);
  if (!b.table.same_contents(m.table)) r.fail("four-wrong run changed the input table");
  if (r.ok)
    r.detail = "off-by-one: success, 2 attempts, 1 reflection; four-wrong: " +
               std::to_string(b.run.attempts.size()) + " attempts, unable to impute, table unchanged";
  return r;
}

Result ac5_close_match() {
  Result r;
  const std::vector<double> epsilons{0.001, 0.01, 1.0, 0.1};
  const std::vector<double> truths{0.0, 5.0, -123.25, 1700.5};
  std::size_t boundary_checks = 0;
  auto expect = [&](double imputed, double truth, double eps, bool want, const char* what) {
    ++boundary_checks;
    if (workflow::close_match(imputed, truth, eps) != want)
      r.fail(std::string(what) + ": imputed " + num(imputed, 17) + " truth " + num(truth, 17) + " eps " + num(eps));
  };
  for (double eps : epsilons) {
    // Exactly representable distance: truth 0, imputed +-eps.
    expect(eps, 0.0, eps, true, "at boundary");
    expect(-eps, 0.0, eps, true, "at boundary");
    expect(std::nextafter(eps, 1e300), 0.0, eps, false, "just above boundary");
    for (double t : truths) {
      expect(t + eps / 2, t, eps, true, "below boundary");
      expect(t - eps / 2, t, eps, true, "below boundary");
      expect(t + 2 * eps, t, eps, false, "above boundary");
      expect(t - 2 * eps, t, eps, false, "above boundary");
    }
  }
  expect(5.0005, 5.0, 0.001, true, "worked example");
  expect(5.002, 5.0, 0.001, false, "worked example");

  // Randomized triples through the verdict path, one table per epsilon.
  SplitMix64 rng(555);
  std::map<double, std::vector<std::pair<double, double>>> by_eps;
  for (int i = 0; i < kCloseMatchTriples; ++i) {
    const double eps = epsilons[rng.below(epsilons.size())];
    const double truth = rng.uniform(-2000.0, 2000.0);
    const double imputed = rng.below(10) == 0 ? truth + (rng.below(2) ? eps : -eps) : truth + eps * rng.uniform(-3, 3);
    by_eps[eps].push_back({imputed, truth});
  }
  std::size_t disagreements = 0, matched = 0, total = 0;
  for (const auto& [eps, pairs] : by_eps) {
    std::vector<std::vector<Cell>> rows;
    oracle::MaskRecord record;
    record.column = "y";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      rows.push_back({Cell::number(pairs[i].first)});
      record.locations.push_back({i, 0});
      record.truth[{i, 0}] = pairs[i].second;
    }
    const Table t({{"y", ColumnKind::Numeric}}, rows);
    const auto verdict = workflow::evaluate_close_match(t, record, eps);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const bool brute = std::fabs(pairs[i].first - pairs[i].second) <= eps;
      if (verdict.per_cell[i].matched != brute || workflow::close_match(pairs[i].first, pairs[i].second, eps) != brute)
        ++disagreements;
      matched += brute ? 1 : 0;
      ++total;
    }
  }
  if (disagreements) r.fail(std::to_string(disagreements) + " disagreements with the brute-force comparator");
  if (r.ok)
    r.detail = std::to_string(boundary_checks) + " boundary checks at eps {0.001, 0.01, 1, 0.1}; " +
               std::to_string(total) + " random triples agree (" + std::to_string(matched) + " matched)";
  return r;
}

metrics::CellOutcome outcome(const std::string& var, double truth, std::optional<double> imputed, bool matched) {
  return {{0, 0}, var, truth, imputed, matched};
}

Result ac6_metrics() {
  Result r;
  SplitMix64 rng(66);
  std::size_t permutations = 0;
  for (int n = 0; n < kMetricSets; ++n) {
    std::vector<metrics::CellOutcome> set;
    const auto vars = 1 + rng.below(4);
    const auto cells = 1 + rng.below(30);
    const auto bias = rng.next_unit();
    for (std::size_t i = 0; i < cells; ++i) {
      const double truth = rng.uniform(-100, 100);
      std::optional<double> imputed;
      if (rng.below(5) != 0) imputed = truth + rng.uniform(-1, 1) * (rng.next_unit() < bias ? 0.001 : 10.0);
      const bool matched = imputed && std::fabs(*imputed - truth) <= 0.01;
      set.push_back(outcome("v" + std::to_string(rng.below(vars)), truth, imputed, matched));
    }
    const double acc = metrics::accuracy(set);
    const auto fa = metrics::find_accuracy(set);
    if (fa ? acc > *fa : acc != 0.0) {
      r.fail("accuracy " + num(acc) + " exceeds find accuracy on set " + std::to_string(n));
      continue;
    }
    std::optional<double> rm;
    try {
      rm = metrics::rmse(set);
    } catch (const Error&) {
    }
    if (n % 10 == 0) {
      auto shuffled = set;
      for (std::size_t i = shuffled.size() - 1; i > 0; --i) std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
      ++permutations;
      if (metrics::accuracy(shuffled) != acc || metrics::find_accuracy(shuffled) != fa)
        r.fail("accuracy changed under permutation");
      if (rm && std::fabs(metrics::rmse(shuffled) - *rm) > 1e-12) r.fail("rmse changed under permutation");
    }
  }
  const double hand = metrics::rmse({outcome("v", 3, 0.0, false), outcome("v", 4, 0.0, false)});
  if (std::fabs(hand - std::sqrt(12.5)) > kHandRmseTol) r.fail("hand rmse " + num(hand, 17));
  const double zero = metrics::rmse({outcome("v", 3, 3.0, true), outcome("v", 4, 4.0, true)});
  if (zero != 0.0) r.fail("identical imputation rmse " + num(zero));
  if (r.ok)
    r.detail = std::to_string(kMetricSets) + " sets, accuracy <= find accuracy; rmse([0,0] vs [3,4]) = " +
               num(hand, 10) + "; " + std::to_string(permutations) + " permutations invariant";
  return r;
}

dsl::ExprPtr random_expr(SplitMix64& rng, int depth) {
  using namespace dsl;
  const auto pick = depth <= 0 ? rng.below(2) : rng.below(5);
  switch (pick) {
    case 0:
      return make_const(static_cast<double>(rng.below(4000)) / 16.0);
    case 1:
      return make_ref(rng.below(2) ? "open" : "close", static_cast<int>(rng.below(9)) - 4);
    case 2:
      return make_binary(static_cast<BinaryOp>(rng.below(4)), random_expr(rng, depth - 1), random_expr(rng, depth - 1));
    case 3: {
      const auto fn = static_cast<ScalarFn>(rng.below(5));
      std::vector<ExprPtr> args{random_expr(rng, depth - 1)};
      if (fn == ScalarFn::Pow || fn == ScalarFn::Max2 || fn == ScalarFn::Min2) args.push_back(random_expr(rng, depth - 1));
      return make_call(fn, std::move(args));
    }
    default: {
      const int lo = -static_cast<int>(rng.below(6));
      return make_window(static_cast<WindowFn>(rng.below(4)), random_expr(rng, depth - 1), lo,
                         lo + static_cast<int>(rng.below(5)));
    }
  }
}

Result ac7_integrity() {
  Result r;
  if (g_end_to_end_runs == 0) r.fail("no end-to-end runs recorded");
  if (g_untouched_modified != 0)
    r.fail(std::to_string(g_untouched_modified) + " non-masked cells modified across end-to-end runs");

  SplitMix64 rng(77);
  int ast_ok = 0;
  for (int i = 0; i < kAstCount; ++i) {
    dsl::FormulaProgram p;
    if (rng.below(2)) p.lets.push_back({"lead", random_expr(rng, 3)});
    p.target = {"target_col", random_expr(rng, 4)};
    const auto text = dsl::format_program(p);
    try {
      const auto back = dsl::parse_program(text);
      if (dsl::structurally_equal(p, back) && dsl::format_program(back) == text) {
        ++ast_ok;
        continue;
      }
    } catch (const Error&) {
    }
    r.fail("parse(format(ast)) differs for: " + text);
  }

  int csv_ok = 0;
  for (int n = 0; n < kCsvTables; ++n) {
    const auto cols = 1 + rng.below(6);
    const auto nrows = 1 + rng.below(30);
    std::vector<ColumnSchema> schema;
    for (std::size_t c = 0; c < cols; ++c)
      schema.push_back({"col" + std::to_string(c), c % 4 == 3 ? ColumnKind::Text : ColumnKind::Numeric});
    std::vector<std::vector<Cell>> data(nrows);
    for (auto& row : data) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (schema[c].kind == ColumnKind::Text)
          row.push_back(Cell::text("t" + std::to_string(rng.below(100000))));
        else if (rng.below(6) == 0)
          row.push_back(Cell::missing());
        else
          row.push_back(Cell::number(rng.uniform(-1e6, 1e6) * std::pow(10.0, static_cast<double>(rng.below(9)) - 4)));
      }
    }
    const Table t(schema, data);
    if (parse_csv(write_csv(t)).same_contents(t))
      ++csv_ok;
    else
      r.fail("CSV round trip changed table " + std::to_string(n));
  }
  if (r.ok)
    r.detail = "0 non-masked cells modified over " + std::to_string(g_end_to_end_runs) + " end-to-end runs; " +
               std::to_string(ast_ok) + " ASTs and " + std::to_string(csv_ok) + " CSV tables round-trip";
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Result ac8_determinism() {
  Result r;
  std::random_device rd;
  const auto base = fs::temp_directory_path() / ("deriva_acceptance_" + std::to_string(rd()));
  std::vector<std::string> reports;
  for (int i = 0; i < 2; ++i) {
    const auto out_dir = base / std::to_string(i);
    std::ostringstream out, err;
    const int code = cli::run_cli({"bench", "--builtin", "zero-rmse", "--jobs", "4", "--out-dir", out_dir.string()},
                                  out, err);
    if (code != 0) r.fail("bench exited " + std::to_string(code) + ": " + err.str());
    for (const auto& e : fs::directory_iterator(out_dir))
      if (fs::exists(e.path() / "report.json")) reports.push_back(slurp(e.path() / "report.json"));
  }
  fs::remove_all(base);
  if (reports.size() != 2)
    r.fail("expected 2 reports, found " + std::to_string(reports.size()));
  else if (reports[0] != reports[1] || reports[0].empty())
    r.fail("report.json differs between runs");
  if (r.ok) r.detail = "two bench runs wrote byte-identical report.json (" + std::to_string(reports[0].size()) + " bytes)";
  return r;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria{
      {"AC1 formula-oracle equivalence", ac1_equivalence},
      {"AC2 zero-RMSE reproduction", ac2_zero_rmse},
      {"AC3 summary rule", ac3_summary_rule},
      {"AC4 reflect-loop semantics", ac4_reflect_loop},
      {"AC5 CloseMatch boundaries", ac5_close_match},
      {"AC6 metric properties", ac6_metrics},
      {"AC7 integrity guarantees", ac7_integrity},
      {"AC8 bench determinism", ac8_determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Result res;
    try {
      res = run();
    } catch (const std::exception& e) {
      res.fail(std::string("exception: ") + e.what());
    }
    std::cout << (res.ok ? "PASS " : "FAIL ") << name << ": " << res.detail << std::endl;
    failed += res.ok ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all acceptance criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
