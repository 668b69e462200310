#pragma once

// Native reference implementations of the derived-value formulas, dataset synthesis and masking.
// Everything here is computed directly from column vectors and is independent of the formula
// language, so it can serve as ground truth for the DSL, the workflow and the metrics.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "deriva/dsl.hpp"
#include "deriva/table.hpp"

namespace deriva::oracle {

enum class FormulaId {
  SMA5,
  EMA5,
  CCI5,
  ROC5,
  MOM10,
  RSI8,
  BMI,
  BMI_WEIGHT,
  BMI_HEIGHT,
  SUPERMARKET_TOTAL,
  SUPERMARKET_UNIT_PRICE,
  SUPERMARKET_QUANTITY,
  SUPERMARKET_TAX5,
  GROSS_INCOME,
  GROSS_COGS,
  GREENTRIP_TOTAL,
  GREENTRIP_TIP,
  GREENTRIP_CONGESTION,
  GREENTRIP_TOLLS,
  KDA,
  KDA_K,
  KDA_D,
  PRATE_PLUS_BRATE,
  PRATE,
};

std::string_view to_string(FormulaId id);
/// Throws Error(UnknownFormula).
FormulaId formula_id_from_string(std::string_view name);
const std::vector<FormulaId>& all_formula_ids();

struct FormulaSpec {
  FormulaId id;
  /// Input columns in the formula's role order (see default_spec for each id).
  std::vector<std::string> input_columns;
  std::string target_column;
  double epsilon = 0.01;
  std::size_t warmup_rows = 0;
};

/// Default column names, CloseMatch tolerance and warmup for each formula.
FormulaSpec default_spec(FormulaId id);

/// Native value of the formula at `row`. Throws WarmupRow, MissingInput, DivisionByZero.
double oracle_value(const FormulaSpec& spec, const Table& table, std::size_t row);

/// Reference formula-language program for the formula, using the FormulaSpec's column names.
dsl::FormulaProgram canonical_program(const FormulaSpec& spec);
dsl::FormulaProgram canonical_program(FormulaId id);
std::string canonical_source(const FormulaSpec& spec);

struct RandomWalk {
  double start = 0.0;
  double step_scale = 1.0;
};
struct Uniform {
  double lo = 0.0;
  double hi = 1.0;
};
struct IntegerUniform {
  std::int64_t lo = 0;
  std::int64_t hi = 1;
};
using Generator = std::variant<RandomWalk, Uniform, IntegerUniform>;

struct BaseColumn {
  std::string name;
  Generator generator;
};

struct SynthesisSpec {
  std::size_t rows = 100;
  std::uint64_t seed = 0;
  std::vector<BaseColumn> base_columns;
  std::vector<FormulaSpec> derived;
};

/// Deterministic per seed. Derived columns are computed with the oracle at every non-warmup row;
/// warmup rows hold truncated-window placeholders. Throws CyclicDerivation, InvalidSpec.
Table synthesize_dataset(const SynthesisSpec& spec);

struct MaskAmount {
  enum class Kind { Rate, Count } kind = Kind::Count;
  double rate = 0.0;
  std::size_t count = 0;

  static MaskAmount of_rate(double r) { return {Kind::Rate, r, 0}; }
  static MaskAmount of_count(std::size_t n) { return {Kind::Count, 0.0, n}; }
};

struct MaskRecord {
  std::string column;
  std::vector<CellLocation> locations;
  std::map<CellLocation, double> truth;
  std::uint64_t seed = 0;
  MaskAmount amount;
};

struct MaskedTable {
  Table table;
  MaskRecord record;
};

/// Masks `amount` cells of `column` chosen uniformly without replacement among rows
/// >= exclude_warmup that currently hold a number. Rate-based counts are floor(rate * eligible), min 1.
/// Throws UnknownColumn, KindMismatch, NotEnoughRows.
MaskedTable mask_column(const Table& table, std::string_view column, MaskAmount amount, std::uint64_t seed,
                        std::size_t exclude_warmup);

struct MaskPlanEntry {
  std::string column;
  MaskAmount amount;
  std::size_t exclude_warmup = 0;
};

struct MultiMask {
  Table table;
  std::vector<MaskRecord> records;
};

/// Masks several columns so that no row is masked in more than one of them.
MultiMask mask_columns(const Table& table, const std::vector<MaskPlanEntry>& plan, std::uint64_t seed);

/// Writes the recorded truth values back.
Table restore(const Table& masked, const MaskRecord& record);

// Dataset presets shaped after the five experiment datasets (row counts and variable sets).
struct DatasetPreset {
  std::string name;
  SynthesisSpec synthesis;
  /// Imputation variables: each is the target of one formula (forward or inverse).
  std::vector<FormulaSpec> variables;
  /// Total number of cells to mask across all variables.
  std::size_t missing_cells = 0;
};

const std::vector<std::string>& preset_names();
DatasetPreset preset(std::string_view name);
/// Mask plan spreading `preset.missing_cells` evenly across variables, warmups excluded.
std::vector<MaskPlanEntry> preset_mask_plan(const DatasetPreset& preset);

// JSON schema helpers.
nlohmann::json to_json(const FormulaSpec& spec);
FormulaSpec formula_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthesisSpec& spec);
SynthesisSpec synthesis_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MaskRecord& record);
MaskRecord mask_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MaskPlanEntry& entry);
MaskPlanEntry mask_plan_entry_from_json(const nlohmann::json& j);

}  // namespace deriva::oracle
