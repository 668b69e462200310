#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "deriva/oracle.hpp"

using namespace deriva;
using namespace deriva::oracle;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::Io;
}

Table column_table(const std::vector<std::string>& names, const std::vector<std::vector<double>>& rows) {
  std::vector<ColumnSchema> schema;
  for (const auto& n : names) schema.push_back({n, ColumnKind::Numeric});
  std::vector<std::vector<Cell>> data;
  for (const auto& r : rows) {
    std::vector<Cell> row;
    for (double v : r) row.push_back(std::isnan(v) ? Cell::missing() : Cell::number(v));
    data.push_back(std::move(row));
  }
  return Table(schema, data);
}

// Every formula id present as a base or derived column of a preset.
std::vector<std::pair<std::string, FormulaSpec>> preset_variables() {
  std::vector<std::pair<std::string, FormulaSpec>> out;
  for (const auto& name : preset_names())
    for (const auto& v : preset(name).variables) out.emplace_back(name, v);
  return out;
}

}  // namespace

TEST(Oracle, HandValues) {
  const double nan = std::nan("");
  auto t = column_table({"close", "sma5"}, {{1, nan}, {2, nan}, {3, nan}, {4, nan}, {5, nan}});
  EXPECT_DOUBLE_EQ(oracle_value(default_spec(FormulaId::SMA5), t, 4), 3.0);
  EXPECT_EQ(code_of([&] { oracle_value(default_spec(FormulaId::SMA5), t, 3); }), Errc::WarmupRow);

  auto e = column_table({"close", "ema5"}, {{1, 1}, {3, nan}});
  EXPECT_NEAR(oracle_value(default_spec(FormulaId::EMA5), e, 1), 5.0 / 3.0, 1e-15);

  auto b = column_table({"weight", "height", "bmi"}, {{4, 2, nan}});
  EXPECT_DOUBLE_EQ(oracle_value(default_spec(FormulaId::BMI), b, 0), 1.0);

  auto k = column_table({"k", "a", "d", "kda"}, {{3, 4, 0, nan}});
  EXPECT_EQ(code_of([&] { oracle_value(default_spec(FormulaId::KDA), k, 0); }), Errc::DivisionByZero);

  auto m = column_table({"close", "mom10"}, std::vector<std::vector<double>>(11, {1, nan}));
  EXPECT_DOUBLE_EQ(oracle_value(default_spec(FormulaId::MOM10), m, 10), 0.0);
  EXPECT_EQ(code_of([&] { oracle_value(default_spec(FormulaId::MOM10), m, 9); }), Errc::WarmupRow);
  m.set({0, 0}, Cell::missing());
  EXPECT_EQ(code_of([&] { oracle_value(default_spec(FormulaId::MOM10), m, 10); }), Errc::MissingInput);
}

TEST(Oracle, FormulaIdNames) {
  for (auto id : all_formula_ids()) EXPECT_EQ(formula_id_from_string(to_string(id)), id);
  EXPECT_EQ(code_of([] { formula_id_from_string("NOPE"); }), Errc::UnknownFormula);
}

TEST(Oracle, CanonicalProgramsMatchOracleOnPresets) {
  for (const auto& [name, spec] : preset_variables()) {
    auto p = preset(name);
    p.synthesis.rows = 300;
    const auto t = synthesize_dataset(p.synthesis);
    const auto prog = canonical_program(spec);
    for (std::size_t r = spec.warmup_rows; r < t.row_count(); ++r) {
      const double want = oracle_value(spec, t, r);
      const double got = dsl::evaluate_cell(prog, t, r);
      ASSERT_NEAR(got, want, 1e-9 * std::max(1.0, std::fabs(want))) << to_string(spec.id) << " row " << r;
    }
  }
}

TEST(Oracle, InverseFormulasRecoverStoredValues) {
  for (const auto& [name, spec] : preset_variables()) {
    auto p = preset(name);
    p.synthesis.rows = 200;
    const auto t = synthesize_dataset(p.synthesis);
    const auto col = t.column_index(spec.target_column);
    for (std::size_t r = spec.warmup_rows; r < t.row_count(); ++r) {
      const double stored = t.at(r, col).as_number();
      ASSERT_NEAR(oracle_value(spec, t, r), stored, 1e-9 * std::max(1.0, std::fabs(stored)))
          << to_string(spec.id) << " row " << r;
    }
  }
}

TEST(Oracle, SynthesisIsDeterministic) {
  auto p = preset("bajaj");
  p.synthesis.rows = 100;
  EXPECT_TRUE(synthesize_dataset(p.synthesis).same_contents(synthesize_dataset(p.synthesis)));
  auto q = p.synthesis;
  q.seed += 1;
  EXPECT_FALSE(synthesize_dataset(p.synthesis).same_contents(synthesize_dataset(q)));
}

TEST(Oracle, PresetShapes) {
  EXPECT_EQ(preset("bajaj").synthesis.rows, 3600u);
  EXPECT_EQ(preset("bmi").synthesis.rows, 720u);
  EXPECT_EQ(preset("supermarket").synthesis.rows, 960u);
  EXPECT_EQ(preset("greentrip").synthesis.rows, 1800u);
  EXPECT_EQ(preset("lolchampion").synthesis.rows, 554u);
  EXPECT_EQ(preset("bajaj").synthesis.derived.size(), 6u);
  EXPECT_EQ(code_of([] { preset("unknown"); }), Errc::InvalidSpec);
}

TEST(Oracle, CyclicDerivationRejected) {
  SynthesisSpec s;
  s.rows = 10;
  s.base_columns = {{"height", Uniform{1.5, 2.0}}};
  auto bmi = default_spec(FormulaId::BMI);
  auto weight = default_spec(FormulaId::BMI_WEIGHT);
  s.derived = {bmi, weight};
  EXPECT_EQ(code_of([&] { synthesize_dataset(s); }), Errc::CyclicDerivation);
}

TEST(Oracle, MaskInvariants) {
  auto p = preset("bajaj");
  p.synthesis.rows = 200;
  const auto t = synthesize_dataset(p.synthesis);
  auto m = mask_column(t, "sma5", MaskAmount::of_count(20), 99, 4);
  ASSERT_EQ(m.record.locations.size(), 20u);
  std::set<std::size_t> rows;
  for (const auto& loc : m.record.locations) {
    EXPECT_GE(loc.row, 4u);
    EXPECT_TRUE(m.table.at(loc).is_missing());
    rows.insert(loc.row);
  }
  EXPECT_EQ(rows.size(), 20u);
  EXPECT_TRUE(restore(m.table, m.record).same_contents(t));
  auto again = mask_column(t, "sma5", MaskAmount::of_count(20), 99, 4);
  EXPECT_EQ(again.record.locations, m.record.locations);

  auto rate = mask_column(t, "sma5", MaskAmount::of_rate(0.1), 1, 4);
  EXPECT_EQ(rate.record.locations.size(), 19u);  // floor(0.1 * 196)
  EXPECT_EQ(code_of([&] { mask_column(t, "sma5", MaskAmount::of_count(500), 1, 4); }), Errc::NotEnoughRows);
}

TEST(Oracle, MultiMaskKeepsRowsDisjoint) {
  const auto p = preset("bmi");
  const auto t = synthesize_dataset(p.synthesis);
  auto mm = mask_columns(t, preset_mask_plan(p), 5);
  std::set<std::size_t> rows;
  std::size_t total = 0;
  for (const auto& rec : mm.records) {
    for (const auto& loc : rec.locations) rows.insert(loc.row);
    total += rec.locations.size();
  }
  EXPECT_EQ(total, 138u);
  EXPECT_EQ(rows.size(), total);
}

TEST(Oracle, JsonRoundTrip) {
  const auto p = preset("supermarket");
  auto back = synthesis_spec_from_json(to_json(p.synthesis));
  EXPECT_TRUE(synthesize_dataset(back).same_contents(synthesize_dataset(p.synthesis)));

  auto t = synthesize_dataset(p.synthesis);
  auto m = mask_column(t, "total", MaskAmount::of_count(3), 8, 0);
  auto rec = mask_record_from_json(to_json(m.record));
  EXPECT_EQ(rec.locations, m.record.locations);
  EXPECT_EQ(rec.truth, m.record.truth);

  auto spec = formula_spec_from_json(nlohmann::json("SMA5"));
  EXPECT_EQ(spec.target_column, "sma5");
}
