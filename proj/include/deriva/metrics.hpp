#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deriva/oracle.hpp"
#include "deriva/table.hpp"

namespace deriva::metrics {

struct CellOutcome {
  CellLocation location;
  std::string variable;
  double truth = 0.0;
  std::optional<double> imputed;
  bool matched = false;
};

/// One outcome per masked cell: imputed is the table's number there (absent if still Missing).
std::vector<CellOutcome> outcomes_from(const Table& imputed, const oracle::MaskRecord& record, double epsilon);

/// matched / total. Throws EmptyOutcomes.
double accuracy(const std::vector<CellOutcome>& outcomes);

/// matched / total over variables with at least one match; nullopt when no variable matched.
/// Throws EmptyOutcomes.
std::optional<double> find_accuracy(const std::vector<CellOutcome>& outcomes);

struct AbsentPolicy {
  enum class Kind { Exclude, Penalize } kind = Kind::Exclude;
  double fallback = 0.0;

  static AbsentPolicy exclude() { return {}; }
  /// Absent cells count as if imputed with `value`.
  static AbsentPolicy penalize_with(double value) { return {Kind::Penalize, value}; }
};

/// sqrt(mean((imputed - truth)^2)) over included cells. Throws EmptyOutcomes, AllExcluded.
double rmse(const std::vector<CellOutcome>& outcomes, AbsentPolicy policy = {});

struct VariableResult {
  std::string variable;
  std::optional<double> accuracy;
  std::optional<double> find_accuracy;
  std::optional<double> rmse;
  std::size_t cell_count = 0;
  std::size_t matched_count = 0;
  std::size_t excluded_count = 0;
  std::vector<CellOutcome> outcomes;
};

/// Per-variable metrics; rmse is absent when every cell was excluded.
VariableResult evaluate_variable(const std::string& variable, const std::vector<CellOutcome>& outcomes,
                                 AbsentPolicy policy = {});

/// A result holding only a known RMSE, e.g. a published figure.
VariableResult rmse_only(const std::string& variable, double rmse);

struct Summary {
  std::optional<double> accuracy;
  std::optional<double> find_accuracy;
  std::optional<double> rmse;
  std::size_t cell_count = 0;
  std::size_t excluded_count = 0;
};

struct ImputationReport {
  std::vector<VariableResult> per_variable;
  Summary summary;
};

/// Summary RMSE is the mean of the per-variable RMSEs; accuracies are over the pooled cells.
ImputationReport summarize_report(const std::vector<VariableResult>& results);

nlohmann::json to_json(const ImputationReport& report);
/// Fixed-width text table: variable, cells, accuracy, find accuracy, RMSE, excluded; then a Summary row.
std::string render_table(const ImputationReport& report, const std::string& title = "");

}  // namespace deriva::metrics
