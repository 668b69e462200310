#include "deriva/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "deriva/workflow.hpp"

namespace deriva::metrics {

std::vector<CellOutcome> outcomes_from(const Table& imputed, const oracle::MaskRecord& record, double epsilon) {
  std::vector<CellOutcome> out;
  out.reserve(record.locations.size());
  for (const auto& loc : record.locations) {
    if (loc.row >= imputed.row_count() || loc.column >= imputed.column_count())
      throw Error(Errc::ShapeMismatch, "masked cell outside the imputed table");
    CellOutcome o;
    o.location = loc;
    o.variable = record.column;
    o.truth = record.truth.at(loc);
    const auto& cell = imputed.at(loc);
    if (cell.is_number()) {
      o.imputed = cell.as_number();
      o.matched = workflow::close_match(*o.imputed, o.truth, epsilon);
    }
    out.push_back(std::move(o));
  }
  return out;
}

namespace {

void require_nonempty(const std::vector<CellOutcome>& outcomes) {
  if (outcomes.empty()) throw Error(Errc::EmptyOutcomes, "no cell outcomes");
}

std::size_t matched_count(const std::vector<CellOutcome>& outcomes) {
  std::size_t n = 0;
  for (const auto& o : outcomes) n += o.matched ? 1 : 0;
  return n;
}

}  // namespace

double accuracy(const std::vector<CellOutcome>& outcomes) {
  require_nonempty(outcomes);
  return static_cast<double>(matched_count(outcomes)) / static_cast<double>(outcomes.size());
}

std::optional<double> find_accuracy(const std::vector<CellOutcome>& outcomes) {
  require_nonempty(outcomes);
  std::set<std::string> found;
  for (const auto& o : outcomes)
    if (o.matched) found.insert(o.variable);
  if (found.empty()) return std::nullopt;
  std::size_t total = 0, matched = 0;
  for (const auto& o : outcomes) {
    if (!found.count(o.variable)) continue;
    ++total;
    matched += o.matched ? 1 : 0;
  }
  return static_cast<double>(matched) / static_cast<double>(total);
}

double rmse(const std::vector<CellOutcome>& outcomes, AbsentPolicy policy) {
  require_nonempty(outcomes);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& o : outcomes) {
    double v;
    if (o.imputed) {
      v = *o.imputed;
    } else if (policy.kind == AbsentPolicy::Kind::Penalize) {
      v = policy.fallback;
    } else {
      continue;
    }
    const double d = v - o.truth;
    sum += d * d;
    ++n;
  }
  if (n == 0) throw Error(Errc::AllExcluded, "every cell was excluded from RMSE");
  return std::sqrt(sum / static_cast<double>(n));
}

VariableResult evaluate_variable(const std::string& variable, const std::vector<CellOutcome>& outcomes,
                                 AbsentPolicy policy) {
  VariableResult r;
  r.variable = variable;
  r.outcomes = outcomes;
  r.cell_count = outcomes.size();
  r.matched_count = matched_count(outcomes);
  for (const auto& o : outcomes)
    if (!o.imputed && policy.kind == AbsentPolicy::Kind::Exclude) ++r.excluded_count;
  r.accuracy = accuracy(outcomes);
  r.find_accuracy = find_accuracy(outcomes);
  if (r.excluded_count < r.cell_count) r.rmse = rmse(outcomes, policy);
  return r;
}

VariableResult rmse_only(const std::string& variable, double value) {
  VariableResult r;
  r.variable = variable;
  r.rmse = value;
  return r;
}

ImputationReport summarize_report(const std::vector<VariableResult>& results) {
  ImputationReport rep;
  rep.per_variable = results;
  std::vector<CellOutcome> pooled;
  double rmse_sum = 0.0;
  std::size_t rmse_n = 0;
  for (const auto& r : results) {
    pooled.insert(pooled.end(), r.outcomes.begin(), r.outcomes.end());
    rep.summary.cell_count += r.cell_count;
    rep.summary.excluded_count += r.excluded_count;
    if (r.rmse) {
      rmse_sum += *r.rmse;
      ++rmse_n;
    }
  }
  if (!pooled.empty()) {
    rep.summary.accuracy = accuracy(pooled);
    rep.summary.find_accuracy = find_accuracy(pooled);
  }
  if (rmse_n > 0) rep.summary.rmse = rmse_sum / static_cast<double>(rmse_n);
  return rep;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string fixed(const std::optional<double>& v, int digits) {
  if (!v) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
  return buf;
}

}  // namespace

nlohmann::json to_json(const ImputationReport& report) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& r : report.per_variable) {
    per[r.variable] = {{"accuracy", opt(r.accuracy)},
                       {"find_accuracy", opt(r.find_accuracy)},
                       {"rmse", opt(r.rmse)},
                       {"cell_count", r.cell_count},
                       {"matched_count", r.matched_count},
                       {"excluded_count", r.excluded_count}};
  }
  return {{"per_variable", per},
          {"summary",
           {{"accuracy", opt(report.summary.accuracy)},
            {"find_accuracy", opt(report.summary.find_accuracy)},
            {"rmse", opt(report.summary.rmse)},
            {"cell_count", report.summary.cell_count},
            {"excluded_count", report.summary.excluded_count}}}};
}

std::string render_table(const ImputationReport& report, const std::string& title) {
  std::ostringstream os;
  char line[256];
  if (!title.empty()) os << title << '\n';
  std::snprintf(line, sizeof line, "%-26s %7s %9s %9s %10s %8s\n", "Variable", "Cells", "Accuracy", "FindAcc",
                "RMSE", "Excluded");
  os << line;
  auto row = [&](const std::string& name, std::size_t cells, const std::optional<double>& acc,
                 const std::optional<double>& fa, const std::optional<double>& rm, std::size_t excl) {
    std::snprintf(line, sizeof line, "%-26s %7zu %9s %9s %10s %8zu\n", name.c_str(), cells, fixed(acc, 4).c_str(),
                  fixed(fa, 4).c_str(), fixed(rm, 4).c_str(), excl);
    os << line;
  };
  for (const auto& r : report.per_variable)
    row(r.variable, r.cell_count, r.accuracy, r.find_accuracy, r.rmse, r.excluded_count);
  row("Summary", report.summary.cell_count, report.summary.accuracy, report.summary.find_accuracy,
      report.summary.rmse, report.summary.excluded_count);
  return os.str();
}

}  // namespace deriva::metrics
