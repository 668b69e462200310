#include "deriva/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "deriva/random.hpp"

namespace deriva::oracle {

namespace {

struct FormulaInfo {
  FormulaId id;
  std::string_view name;
  std::vector<std::string> inputs;
  std::string target;
  double epsilon;
  std::size_t warmup;
};

const std::vector<FormulaInfo>& registry() {
  static const std::vector<FormulaInfo> info{
      {FormulaId::SMA5, "SMA5", {"close"}, "sma5", 0.001, 4},
      {FormulaId::EMA5, "EMA5", {"close"}, "ema5", 0.001, 1},
      {FormulaId::CCI5, "CCI5", {"high", "low", "close"}, "cci5", 0.001, 4},
      {FormulaId::ROC5, "ROC5", {"close"}, "roc5", 0.001, 5},
      {FormulaId::MOM10, "MOM10", {"close"}, "mom10", 0.001, 10},
      {FormulaId::RSI8, "RSI8", {"close"}, "rsi8", 0.001, 8},
      {FormulaId::BMI, "BMI", {"weight", "height"}, "bmi", 0.01, 0},
      {FormulaId::BMI_WEIGHT, "BMI_WEIGHT", {"bmi", "height"}, "weight", 0.01, 0},
      {FormulaId::BMI_HEIGHT, "BMI_HEIGHT", {"weight", "bmi"}, "height", 0.01, 0},
      {FormulaId::SUPERMARKET_TOTAL, "SUPERMARKET_TOTAL", {"unit_price", "quantity", "tax5"}, "total", 0.01, 0},
      {FormulaId::SUPERMARKET_UNIT_PRICE, "SUPERMARKET_UNIT_PRICE", {"total", "quantity", "tax5"}, "unit_price", 0.01, 0},
      {FormulaId::SUPERMARKET_QUANTITY, "SUPERMARKET_QUANTITY", {"total", "unit_price", "tax5"}, "quantity", 0.01, 0},
      {FormulaId::SUPERMARKET_TAX5, "SUPERMARKET_TAX5", {"total", "unit_price", "quantity"}, "tax5", 0.01, 0},
      {FormulaId::GROSS_INCOME, "GROSS_INCOME", {"cogs", "gross_margin_percentage"}, "gross_income", 0.01, 0},
      {FormulaId::GROSS_COGS, "GROSS_COGS", {"gross_income", "gross_margin_percentage"}, "cogs", 0.01, 0},
      {FormulaId::GREENTRIP_TOTAL, "GREENTRIP_TOTAL",
       {"fare_amount", "extra", "mta_tax", "tip_amount", "congestion_surcharge", "tolls_amount", "improvement_surcharge"},
       "total_amount", 0.01, 0},
      {FormulaId::GREENTRIP_TIP, "GREENTRIP_TIP",
       {"total_amount", "fare_amount", "extra", "mta_tax", "congestion_surcharge", "tolls_amount", "improvement_surcharge"},
       "tip_amount", 0.01, 0},
      {FormulaId::GREENTRIP_CONGESTION, "GREENTRIP_CONGESTION",
       {"total_amount", "fare_amount", "extra", "mta_tax", "tip_amount", "tolls_amount", "improvement_surcharge"},
       "congestion_surcharge", 0.01, 0},
      {FormulaId::GREENTRIP_TOLLS, "GREENTRIP_TOLLS",
       {"total_amount", "fare_amount", "extra", "mta_tax", "tip_amount", "congestion_surcharge", "improvement_surcharge"},
       "tolls_amount", 0.01, 0},
      {FormulaId::KDA, "KDA", {"k", "a", "d"}, "kda", 0.1, 0},
      {FormulaId::KDA_K, "KDA_K", {"kda", "d", "a"}, "k", 1.0, 0},
      {FormulaId::KDA_D, "KDA_D", {"k", "a", "kda"}, "d", 1.0, 0},
      {FormulaId::PRATE_PLUS_BRATE, "PRATE_PLUS_BRATE", {"prate", "brate"}, "prate_plus_brate", 0.01, 0},
      {FormulaId::PRATE, "PRATE", {"prate_plus_brate", "brate"}, "prate", 0.01, 0},
  };
  return info;
}

const FormulaInfo& info_for(FormulaId id) {
  for (const auto& i : registry()) {
    if (i.id == id) return i;
  }
  throw Error(Errc::UnknownFormula, "unregistered formula id");
}

std::size_t expected_inputs(FormulaId id) { return info_for(id).inputs.size(); }

// Reads a numeric input; Missing/text cells are MissingInput.
class Reader {
 public:
  Reader(const FormulaSpec& spec, const Table& table) : table_(table) {
    if (spec.input_columns.size() != expected_inputs(spec.id)) {
      throw Error(Errc::InvalidSpec, std::string(to_string(spec.id)) + " expects " +
                                         std::to_string(expected_inputs(spec.id)) + " input columns");
    }
    for (const auto& c : spec.input_columns) cols_.push_back(table.column_index(c));
    target_ = table.column_index(spec.target_column);
  }

  double in(std::size_t role, std::size_t row) const { return get(cols_.at(role), row); }
  double target(std::size_t row) const { return get(target_, row); }

 private:
  double get(std::size_t col, std::size_t row) const {
    const auto& cell = table_.at(row, col);
    if (!cell.is_number()) {
      throw Error(Errc::MissingInput,
                  "missing input at (" + std::to_string(row) + ", " + std::to_string(col) + ")");
    }
    return cell.as_number();
  }

  const Table& table_;
  std::vector<std::size_t> cols_;
  std::size_t target_ = 0;
};

double divide(double a, double b, std::size_t row) {
  if (b == 0.0) throw Error(Errc::DivisionByZero, "zero denominator at row " + std::to_string(row));
  return a / b;
}

constexpr double kEmaAlpha = 2.0 / 6.0;

double typical_price(const Reader& rd, std::size_t r) {
  return (rd.in(0, r) + rd.in(1, r) + rd.in(2, r)) / 3.0;
}

// `first` is the earliest row a window may use; for true oracle values it is row - warmup.
double compute(const FormulaSpec& spec, const Reader& rd, std::size_t row, std::size_t first) {
  switch (spec.id) {
    case FormulaId::SMA5: {
      double s = 0.0;
      for (std::size_t r = first; r <= row; ++r) s += rd.in(0, r);
      return s / static_cast<double>(row - first + 1);
    }
    case FormulaId::EMA5:
      if (row == 0) return rd.in(0, 0);
      return kEmaAlpha * rd.in(0, row) + (1.0 - kEmaAlpha) * rd.target(row - 1);
    case FormulaId::CCI5: {
      const double n = static_cast<double>(row - first + 1);
      double tp_sum = 0.0;
      double sq_sum = 0.0;
      for (std::size_t r = first; r <= row; ++r) {
        const double tp = typical_price(rd, r);
        tp_sum += tp;
        sq_sum += (rd.in(2, r) - tp) * (rd.in(2, r) - tp);
      }
      const double ma = tp_sum / n;
      const double md = std::sqrt(sq_sum / n);
      // Truncated warmup windows can be degenerate; they only hold placeholders.
      if (md == 0.0 && row - first < spec.warmup_rows) return 0.0;
      return divide(typical_price(rd, row) - ma, 0.015 * md, row);
    }
    case FormulaId::ROC5: {
      const double base = rd.in(0, first);
      return divide(rd.in(0, row) - base, base, row);
    }
    case FormulaId::MOM10:
      return rd.in(0, row) - rd.in(0, first);
    case FormulaId::RSI8: {
      if (row == first) return 50.0;
      double gain = 0.0;
      double loss = 0.0;
      for (std::size_t r = first + 1; r <= row; ++r) {
        const double delta = rd.in(0, r) - rd.in(0, r - 1);
        gain += std::max(delta, 0.0);
        loss += std::max(-delta, 0.0);
      }
      const double n = static_cast<double>(row - first);
      gain /= n;
      loss /= n;
      if (loss == 0.0) return 100.0;
      return 100.0 - 100.0 / (1.0 + gain / loss);
    }
    case FormulaId::BMI:
      return divide(rd.in(0, row), std::pow(rd.in(1, row), 2.0), row);
    case FormulaId::BMI_WEIGHT:
      return rd.in(0, row) * std::pow(rd.in(1, row), 2.0);
    case FormulaId::BMI_HEIGHT: {
      const double ratio = divide(rd.in(0, row), rd.in(1, row), row);
      if (ratio < 0.0) throw Error(Errc::InvalidSpec, "negative weight/bmi ratio at row " + std::to_string(row));
      return std::sqrt(ratio);
    }
    case FormulaId::SUPERMARKET_TOTAL:
      return rd.in(0, row) * rd.in(1, row) + rd.in(2, row);
    case FormulaId::SUPERMARKET_UNIT_PRICE:
    case FormulaId::SUPERMARKET_QUANTITY:
      return divide(rd.in(0, row) - rd.in(2, row), rd.in(1, row), row);
    case FormulaId::SUPERMARKET_TAX5:
      return rd.in(0, row) - rd.in(1, row) * rd.in(2, row);
    case FormulaId::GROSS_INCOME:
      return rd.in(0, row) * rd.in(1, row);
    case FormulaId::GROSS_COGS:
      return divide(rd.in(0, row), rd.in(1, row), row);
    case FormulaId::GREENTRIP_TOTAL: {
      double s = rd.in(0, row);
      for (std::size_t i = 1; i < 7; ++i) s = s + rd.in(i, row);
      return s;
    }
    case FormulaId::GREENTRIP_TIP:
    case FormulaId::GREENTRIP_CONGESTION:
    case FormulaId::GREENTRIP_TOLLS: {
      double s = rd.in(0, row);
      for (std::size_t i = 1; i < 7; ++i) s = s - rd.in(i, row);
      return s;
    }
    case FormulaId::KDA:
      return divide(rd.in(0, row) + rd.in(1, row), rd.in(2, row), row);
    case FormulaId::KDA_K:
      return rd.in(0, row) * rd.in(1, row) - rd.in(2, row);
    case FormulaId::KDA_D:
      return divide(rd.in(0, row) + rd.in(1, row), rd.in(2, row), row);
    case FormulaId::PRATE_PLUS_BRATE:
      return rd.in(0, row) + rd.in(1, row);
    case FormulaId::PRATE:
      return rd.in(0, row) - rd.in(1, row);
  }
  throw Error(Errc::UnknownFormula, "unhandled formula");
}

}  // namespace

std::string_view to_string(FormulaId id) { return info_for(id).name; }

FormulaId formula_id_from_string(std::string_view name) {
  for (const auto& i : registry()) {
    if (i.name == name) return i.id;
  }
  throw Error(Errc::UnknownFormula, std::string(name));
}

const std::vector<FormulaId>& all_formula_ids() {
  static const std::vector<FormulaId> ids = [] {
    std::vector<FormulaId> v;
    for (const auto& i : registry()) v.push_back(i.id);
    return v;
  }();
  return ids;
}

FormulaSpec default_spec(FormulaId id) {
  const auto& i = info_for(id);
  return FormulaSpec{id, i.inputs, i.target, i.epsilon, i.warmup};
}

double oracle_value(const FormulaSpec& spec, const Table& table, std::size_t row) {
  if (row >= table.row_count()) {
    throw Error(Errc::OutOfBounds, "row " + std::to_string(row) + " of " + std::to_string(table.row_count()));
  }
  if (row < spec.warmup_rows) {
    throw Error(Errc::WarmupRow, std::string(to_string(spec.id)) + " is undefined at row " + std::to_string(row));
  }
  Reader rd(spec, table);
  return compute(spec, rd, row, row - spec.warmup_rows);
}

std::string canonical_source(const FormulaSpec& s) {
  const auto& in = s.input_columns;
  if (in.size() != expected_inputs(s.id)) {
    throw Error(Errc::InvalidSpec, std::string(to_string(s.id)) + " expects " +
                                       std::to_string(expected_inputs(s.id)) + " input columns");
  }
  const auto& t = s.target_column;
  auto ref = [](const std::string& c) { return c + "[t]"; };
  switch (s.id) {
    case FormulaId::SMA5:
      return "target " + t + " = mean(" + ref(in[0]) + ", -4, 0);";
    case FormulaId::EMA5:
      return "target " + t + " = (2 / 6) * " + ref(in[0]) + " + (1 - 2 / 6) * " + t + "[t-1];";
    case FormulaId::CCI5:
      return "let tp = (" + ref(in[0]) + " + " + ref(in[1]) + " + " + ref(in[2]) + ") / 3;\n" + "target " + t +
             " = (tp[t] - mean(tp[t], -4, 0)) / (0.015 * sqrt(mean(pow(" + ref(in[2]) +
             " - tp[t], 2), -4, 0)));";
    case FormulaId::ROC5:
      return "target " + t + " = (" + ref(in[0]) + " - " + in[0] + "[t-5]) / " + in[0] + "[t-5];";
    case FormulaId::MOM10:
      return "target " + t + " = " + ref(in[0]) + " - " + in[0] + "[t-10];";
    case FormulaId::RSI8:
      return "let gain = mean(max2(" + ref(in[0]) + " - " + in[0] + "[t-1], 0), -7, 0);\n" +
             "let loss = mean(max2(" + in[0] + "[t-1] - " + ref(in[0]) + ", 0), -7, 0);\n" + "target " + t +
             " = 100 * gain[t] / (gain[t] + loss[t]);";
    case FormulaId::BMI:
      return "target " + t + " = " + ref(in[0]) + " / pow(" + ref(in[1]) + ", 2);";
    case FormulaId::BMI_WEIGHT:
      return "target " + t + " = " + ref(in[0]) + " * pow(" + ref(in[1]) + ", 2);";
    case FormulaId::BMI_HEIGHT:
      return "target " + t + " = sqrt(" + ref(in[0]) + " / " + ref(in[1]) + ");";
    case FormulaId::SUPERMARKET_TOTAL:
      return "target " + t + " = " + ref(in[0]) + " * " + ref(in[1]) + " + " + ref(in[2]) + ";";
    case FormulaId::SUPERMARKET_UNIT_PRICE:
    case FormulaId::SUPERMARKET_QUANTITY:
      return "target " + t + " = (" + ref(in[0]) + " - " + ref(in[2]) + ") / " + ref(in[1]) + ";";
    case FormulaId::SUPERMARKET_TAX5:
      return "target " + t + " = " + ref(in[0]) + " - " + ref(in[1]) + " * " + ref(in[2]) + ";";
    case FormulaId::GROSS_INCOME:
      return "target " + t + " = " + ref(in[0]) + " * " + ref(in[1]) + ";";
    case FormulaId::GROSS_COGS:
      return "target " + t + " = " + ref(in[0]) + " / " + ref(in[1]) + ";";
    case FormulaId::GREENTRIP_TOTAL:
    case FormulaId::GREENTRIP_TIP:
    case FormulaId::GREENTRIP_CONGESTION:
    case FormulaId::GREENTRIP_TOLLS: {
      const char* op = s.id == FormulaId::GREENTRIP_TOTAL ? " + " : " - ";
      std::string body = ref(in[0]);
      for (std::size_t i = 1; i < in.size(); ++i) body += op + ref(in[i]);
      return "target " + t + " = " + body + ";";
    }
    case FormulaId::KDA:
    case FormulaId::KDA_D:
      return "target " + t + " = (" + ref(in[0]) + " + " + ref(in[1]) + ") / " + ref(in[2]) + ";";
    case FormulaId::KDA_K:
      return "target " + t + " = " + ref(in[0]) + " * " + ref(in[1]) + " - " + ref(in[2]) + ";";
    case FormulaId::PRATE_PLUS_BRATE:
      return "target " + t + " = " + ref(in[0]) + " + " + ref(in[1]) + ";";
    case FormulaId::PRATE:
      return "target " + t + " = " + ref(in[0]) + " - " + ref(in[1]) + ";";
  }
  throw Error(Errc::UnknownFormula, "unhandled formula");
}

dsl::FormulaProgram canonical_program(const FormulaSpec& spec) { return dsl::parse_program(canonical_source(spec)); }

dsl::FormulaProgram canonical_program(FormulaId id) { return canonical_program(default_spec(id)); }

// ---------------------------------------------------------------------------
// Synthesis

namespace {

std::vector<double> generate(const Generator& g, std::size_t rows, SplitMix64& rng) {
  std::vector<double> out(rows);
  std::visit(
      [&](const auto& gen) {
        using T = std::decay_t<decltype(gen)>;
        for (std::size_t r = 0; r < rows; ++r) {
          if constexpr (std::is_same_v<T, RandomWalk>) {
            out[r] = r == 0 ? gen.start : out[r - 1] + gen.step_scale * (2.0 * rng.next_unit() - 1.0);
          } else if constexpr (std::is_same_v<T, Uniform>) {
            out[r] = rng.uniform(gen.lo, gen.hi);
          } else {
            const auto span = static_cast<std::uint64_t>(gen.hi - gen.lo) + 1;
            out[r] = static_cast<double>(gen.lo + static_cast<std::int64_t>(rng.below(span)));
          }
        }
      },
      g);
  return out;
}

std::vector<std::size_t> derivation_order(const SynthesisSpec& spec) {
  std::set<std::string> available;
  for (const auto& b : spec.base_columns) {
    if (!available.insert(b.name).second) throw Error(Errc::DuplicateColumn, b.name);
  }
  std::set<std::string> pending_targets;
  for (const auto& d : spec.derived) {
    if (available.count(d.target_column) || !pending_targets.insert(d.target_column).second) {
      throw Error(Errc::InvalidSpec, "derived column '" + d.target_column + "' is defined twice");
    }
  }
  std::vector<std::size_t> order;
  std::vector<bool> done(spec.derived.size(), false);
  while (order.size() < spec.derived.size()) {
    bool progressed = false;
    for (std::size_t i = 0; i < spec.derived.size(); ++i) {
      if (done[i]) continue;
      const auto& d = spec.derived[i];
      const bool ready = std::all_of(d.input_columns.begin(), d.input_columns.end(),
                                     [&](const std::string& c) { return available.count(c) > 0; });
      if (ready) {
        done[i] = true;
        available.insert(d.target_column);
        order.push_back(i);
        progressed = true;
      }
    }
    if (!progressed) {
      std::string stuck;
      for (std::size_t i = 0; i < spec.derived.size(); ++i) {
        if (done[i]) continue;
        for (const auto& c : spec.derived[i].input_columns) {
          if (available.count(c)) continue;
          if (!pending_targets.count(c)) {
            throw Error(Errc::InvalidSpec, "input column '" + c + "' of " +
                                               std::string(to_string(spec.derived[i].id)) + " is never defined");
          }
        }
        stuck += (stuck.empty() ? "" : ", ") + spec.derived[i].target_column;
      }
      throw Error(Errc::CyclicDerivation, "derived columns depend on each other: " + stuck);
    }
  }
  return order;
}

}  // namespace

Table synthesize_dataset(const SynthesisSpec& spec) {
  if (spec.rows == 0) throw Error(Errc::InvalidSpec, "rows must be positive");
  for (const auto& d : spec.derived) {
    if (d.epsilon <= 0.0) throw Error(Errc::InvalidSpec, "epsilon must be positive");
  }
  const auto order = derivation_order(spec);

  SplitMix64 rng(spec.seed);
  std::vector<ColumnSchema> columns;
  std::vector<std::vector<double>> values;
  for (const auto& b : spec.base_columns) {
    columns.push_back({b.name, ColumnKind::Numeric});
    values.push_back(generate(b.generator, spec.rows, rng));
  }
  for (const auto& d : spec.derived) columns.push_back({d.target_column, ColumnKind::Numeric});

  std::vector<std::vector<Cell>> rows(spec.rows);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    rows[r].reserve(columns.size());
    for (const auto& v : values) rows[r].push_back(Cell::number(v[r]));
    rows[r].resize(columns.size());
  }
  Table table(std::move(columns), std::move(rows));

  for (const auto idx : order) {
    const auto& d = spec.derived[idx];
    Reader rd(d, table);
    const auto col = table.column_index(d.target_column);
    for (std::size_t r = 0; r < spec.rows; ++r) {
      const std::size_t first = r >= d.warmup_rows ? r - d.warmup_rows : 0;
      const double v = compute(d, rd, r, first);
      if (!std::isfinite(v)) {
        throw Error(Errc::InvalidSpec, "non-finite " + d.target_column + " at row " + std::to_string(r));
      }
      table.set({r, col}, Cell::number(v));
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Masking

namespace {

std::size_t resolve_count(MaskAmount amount, std::size_t eligible) {
  if (amount.kind == MaskAmount::Kind::Count) return amount.count;
  if (amount.rate < 0.0 || amount.rate > 1.0) throw Error(Errc::InvalidSpec, "mask rate must lie in [0, 1]");
  const auto n = static_cast<std::size_t>(std::floor(amount.rate * static_cast<double>(eligible)));
  return std::max<std::size_t>(n, 1);
}

MaskedTable mask_excluding(const Table& table, std::string_view column, MaskAmount amount, std::uint64_t seed,
                           std::size_t exclude_warmup, const std::set<std::size_t>& taken_rows) {
  const auto col = table.column_index(column);
  if (!table.is_numeric(col)) throw Error(Errc::KindMismatch, "column '" + std::string(column) + "' is not numeric");

  std::vector<std::size_t> eligible;
  for (std::size_t r = exclude_warmup; r < table.row_count(); ++r) {
    if (table.rows()[r][col].is_number() && !taken_rows.count(r)) eligible.push_back(r);
  }
  const auto count = resolve_count(amount, eligible.size());
  if (count > eligible.size() || eligible.empty()) {
    throw Error(Errc::NotEnoughRows, "cannot mask " + std::to_string(count) + " cells of '" + std::string(column) +
                                         "': only " + std::to_string(eligible.size()) + " eligible rows");
  }

  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  std::vector<std::size_t> chosen(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(chosen.begin(), chosen.end());

  MaskedTable out{table, {std::string(column), {}, {}, seed, amount}};
  for (const auto r : chosen) {
    const CellLocation loc{r, col};
    out.record.locations.push_back(loc);
    out.record.truth.emplace(loc, table.at(loc).as_number());
    out.table.set(loc, Cell::missing());
  }
  return out;
}

}  // namespace

MaskedTable mask_column(const Table& table, std::string_view column, MaskAmount amount, std::uint64_t seed,
                        std::size_t exclude_warmup) {
  return mask_excluding(table, column, amount, seed, exclude_warmup, {});
}

MultiMask mask_columns(const Table& table, const std::vector<MaskPlanEntry>& plan, std::uint64_t seed) {
  SplitMix64 seeds(seed);
  MultiMask out{table, {}};
  std::set<std::size_t> taken;
  for (const auto& entry : plan) {
    auto m = mask_excluding(out.table, entry.column, entry.amount, seeds.next(), entry.exclude_warmup, taken);
    for (const auto& loc : m.record.locations) taken.insert(loc.row);
    out.table = std::move(m.table);
    out.records.push_back(std::move(m.record));
  }
  return out;
}

Table restore(const Table& masked, const MaskRecord& record) {
  Table out = masked;
  for (const auto& [loc, v] : record.truth) out.set(loc, Cell::number(v));
  return out;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

FormulaSpec spec_of(FormulaId id) { return default_spec(id); }

DatasetPreset make_preset(std::string_view name) {
  DatasetPreset p;
  p.name = std::string(name);
  auto& s = p.synthesis;
  if (name == "bajaj") {
    s.rows = 3600;
    s.seed = 20240601;
    s.base_columns = {{"open", RandomWalk{1700.0, 5.0}},   {"high", RandomWalk{1705.0, 5.0}},
                      {"low", RandomWalk{1695.0, 5.0}},    {"close", RandomWalk{1700.0, 5.0}},
                      {"volume", IntegerUniform{1000, 100000}}, {"turnover", Uniform{1.0e6, 5.0e7}}};
    for (auto id : {FormulaId::SMA5, FormulaId::EMA5, FormulaId::CCI5, FormulaId::ROC5, FormulaId::MOM10,
                    FormulaId::RSI8}) {
      s.derived.push_back(spec_of(id));
      p.variables.push_back(spec_of(id));
    }
    p.missing_cells = 334;
  } else if (name == "bmi") {
    s.rows = 720;
    s.seed = 20240602;
    s.base_columns = {{"age", IntegerUniform{18, 80}},
                      {"gender_code", IntegerUniform{0, 1}},
                      {"height", Uniform{1.45, 2.0}},
                      {"weight", Uniform{45.0, 120.0}}};
    s.derived = {spec_of(FormulaId::BMI)};
    p.variables = {spec_of(FormulaId::BMI_WEIGHT), spec_of(FormulaId::BMI_HEIGHT), spec_of(FormulaId::BMI)};
    p.missing_cells = 138;
  } else if (name == "supermarket") {
    s.rows = 960;
    s.seed = 20240603;
    s.base_columns = {{"invoice_no", IntegerUniform{100000, 999999}},
                      {"branch_code", IntegerUniform{1, 3}},
                      {"unit_price", Uniform{10.0, 100.0}},
                      {"quantity", IntegerUniform{1, 10}},
                      {"tax5", Uniform{0.5, 50.0}},
                      {"cogs", Uniform{10.0, 1000.0}},
                      {"gross_margin_percentage", Uniform{0.047619, 0.047619}},
                      {"rating", Uniform{4.0, 10.0}}};
    s.derived = {spec_of(FormulaId::SUPERMARKET_TOTAL), spec_of(FormulaId::GROSS_INCOME)};
    p.variables = {spec_of(FormulaId::SUPERMARKET_UNIT_PRICE), spec_of(FormulaId::SUPERMARKET_QUANTITY),
                   spec_of(FormulaId::SUPERMARKET_TAX5),       spec_of(FormulaId::SUPERMARKET_TOTAL),
                   spec_of(FormulaId::GROSS_COGS),             spec_of(FormulaId::GROSS_INCOME)};
    p.missing_cells = 180;
  } else if (name == "greentrip") {
    s.rows = 1800;
    s.seed = 20240604;
    s.base_columns = {{"fare_amount", Uniform{3.0, 60.0}},
                      {"extra", Uniform{0.0, 2.5}},
                      {"mta_tax", Uniform{0.5, 0.5}},
                      {"tip_amount", Uniform{0.0, 10.0}},
                      {"congestion_surcharge", Uniform{0.0, 2.75}},
                      {"tolls_amount", Uniform{0.0, 7.0}},
                      {"improvement_surcharge", Uniform{1.0, 1.0}},
                      {"trip_distance", Uniform{0.3, 20.0}},
                      {"passenger_count", IntegerUniform{1, 6}},
                      {"payment_type", IntegerUniform{1, 4}},
                      {"trip_type", IntegerUniform{1, 2}},
                      {"ratecode_id", IntegerUniform{1, 5}}};
    s.derived = {spec_of(FormulaId::GREENTRIP_TOTAL)};
    p.variables = {spec_of(FormulaId::GREENTRIP_TIP), spec_of(FormulaId::GREENTRIP_TOTAL),
                   spec_of(FormulaId::GREENTRIP_CONGESTION), spec_of(FormulaId::GREENTRIP_TOLLS)};
    p.missing_cells = 215;
  } else if (name == "lolchampion") {
    s.rows = 554;
    s.seed = 20240605;
    s.base_columns = {{"k", Uniform{0.0, 8.0}},       {"a", Uniform{0.0, 12.0}},      {"d", Uniform{0.5, 6.0}},
                      {"prate", Uniform{0.0, 0.5}},   {"brate", Uniform{0.0, 0.5}},   {"wrate", Uniform{0.3, 0.7}},
                      {"games", IntegerUniform{1, 300}}, {"cs", Uniform{0.0, 10.0}}, {"gold", Uniform{5.0, 15.0}},
                      {"damage", Uniform{100.0, 1000.0}}};
    s.derived = {spec_of(FormulaId::KDA), spec_of(FormulaId::PRATE_PLUS_BRATE)};
    p.variables = {spec_of(FormulaId::PRATE_PLUS_BRATE), spec_of(FormulaId::KDA_D), spec_of(FormulaId::KDA_K),
                   spec_of(FormulaId::KDA), spec_of(FormulaId::PRATE)};
    p.missing_cells = 107;
  } else {
    throw Error(Errc::InvalidSpec, "unknown dataset preset '" + std::string(name) + "'");
  }
  return p;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"bajaj", "bmi", "supermarket", "greentrip", "lolchampion"};
  return names;
}

DatasetPreset preset(std::string_view name) { return make_preset(name); }

std::vector<MaskPlanEntry> preset_mask_plan(const DatasetPreset& p) {
  std::vector<MaskPlanEntry> plan;
  const auto n = p.variables.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto count = p.missing_cells / n + (i < p.missing_cells % n ? 1 : 0);
    plan.push_back({p.variables[i].target_column, MaskAmount::of_count(count), p.variables[i].warmup_rows});
  }
  return plan;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const FormulaSpec& spec) {
  return {{"id", std::string(to_string(spec.id))},
          {"input_columns", spec.input_columns},
          {"target_column", spec.target_column},
          {"epsilon", spec.epsilon},
          {"warmup_rows", spec.warmup_rows}};
}

FormulaSpec formula_spec_from_json(const nlohmann::json& j) {
  try {
    if (j.is_string()) return default_spec(formula_id_from_string(j.get<std::string>()));
    auto spec = default_spec(formula_id_from_string(j.at("id").get<std::string>()));
    if (j.contains("input_columns")) spec.input_columns = j["input_columns"].get<std::vector<std::string>>();
    if (j.contains("target_column")) spec.target_column = j["target_column"].get<std::string>();
    if (j.contains("epsilon")) spec.epsilon = j["epsilon"].get<double>();
    if (j.contains("warmup_rows")) spec.warmup_rows = j["warmup_rows"].get<std::size_t>();
    if (spec.epsilon <= 0.0) throw Error(Errc::InvalidSpec, "epsilon must be positive");
    if (spec.input_columns.size() != expected_inputs(spec.id)) {
      throw Error(Errc::InvalidSpec, std::string(to_string(spec.id)) + " expects " +
                                         std::to_string(expected_inputs(spec.id)) + " input columns");
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidSpec, e.what());
  }
}

nlohmann::json to_json(const SynthesisSpec& spec) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& b : spec.base_columns) {
    nlohmann::json c{{"name", b.name}};
    std::visit(
        [&](const auto& g) {
          using T = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<T, RandomWalk>) {
            c["generator"] = "random_walk";
            c["start"] = g.start;
            c["step_scale"] = g.step_scale;
          } else if constexpr (std::is_same_v<T, Uniform>) {
            c["generator"] = "uniform";
            c["lo"] = g.lo;
            c["hi"] = g.hi;
          } else {
            c["generator"] = "integer_uniform";
            c["lo"] = g.lo;
            c["hi"] = g.hi;
          }
        },
        b.generator);
    cols.push_back(std::move(c));
  }
  nlohmann::json derived = nlohmann::json::array();
  for (const auto& d : spec.derived) derived.push_back(to_json(d));
  return {{"rows", spec.rows}, {"seed", spec.seed}, {"base_columns", cols}, {"derived", derived}};
}

SynthesisSpec synthesis_spec_from_json(const nlohmann::json& j) {
  try {
    SynthesisSpec s;
    s.rows = j.at("rows").get<std::size_t>();
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& c : j.at("base_columns")) {
      const auto gen = c.at("generator").get<std::string>();
      Generator g;
      if (gen == "random_walk") {
        g = RandomWalk{c.at("start").get<double>(), c.at("step_scale").get<double>()};
      } else if (gen == "uniform") {
        g = Uniform{c.at("lo").get<double>(), c.at("hi").get<double>()};
      } else if (gen == "integer_uniform") {
        const auto lo = c.at("lo").get<std::int64_t>();
        const auto hi = c.at("hi").get<std::int64_t>();
        if (lo > hi) throw Error(Errc::InvalidSpec, "integer_uniform lo > hi");
        g = IntegerUniform{lo, hi};
      } else {
        throw Error(Errc::InvalidSpec, "unknown generator '" + gen + "'");
      }
      s.base_columns.push_back({c.at("name").get<std::string>(), g});
    }
    if (j.contains("derived")) {
      for (const auto& d : j["derived"]) s.derived.push_back(formula_spec_from_json(d));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidSpec, e.what());
  }
}

nlohmann::json to_json(const MaskRecord& record) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& loc : record.locations) {
    cells.push_back({{"row", loc.row}, {"column", loc.column}, {"truth", record.truth.at(loc)}});
  }
  nlohmann::json amount = record.amount.kind == MaskAmount::Kind::Rate ? nlohmann::json{{"rate", record.amount.rate}}
                                                                       : nlohmann::json{{"count", record.amount.count}};
  return {{"column", record.column}, {"seed", record.seed}, {"amount", amount}, {"cells", cells}};
}

MaskRecord mask_record_from_json(const nlohmann::json& j) {
  try {
    MaskRecord r;
    r.column = j.at("column").get<std::string>();
    r.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("amount")) {
      const auto& a = j["amount"];
      r.amount = a.contains("rate") ? MaskAmount::of_rate(a["rate"].get<double>())
                                    : MaskAmount::of_count(a.value("count", std::size_t{0}));
    }
    for (const auto& c : j.at("cells")) {
      const CellLocation loc{c.at("row").get<std::size_t>(), c.at("column").get<std::size_t>()};
      r.locations.push_back(loc);
      r.truth.emplace(loc, c.at("truth").get<double>());
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidSpec, e.what());
  }
}

nlohmann::json to_json(const MaskPlanEntry& entry) {
  nlohmann::json j{{"column", entry.column}, {"exclude_warmup", entry.exclude_warmup}};
  if (entry.amount.kind == MaskAmount::Kind::Rate) {
    j["rate"] = entry.amount.rate;
  } else {
    j["count"] = entry.amount.count;
  }
  return j;
}

MaskPlanEntry mask_plan_entry_from_json(const nlohmann::json& j) {
  try {
    MaskPlanEntry e;
    e.column = j.at("column").get<std::string>();
    e.exclude_warmup = j.value("exclude_warmup", std::size_t{0});
    if (j.contains("rate")) {
      e.amount = MaskAmount::of_rate(j["rate"].get<double>());
    } else {
      e.amount = MaskAmount::of_count(j.at("count").get<std::size_t>());
    }
    return e;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidSpec, e.what());
  }
}

}  // namespace deriva::oracle
