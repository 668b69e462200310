#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deriva/dsl.hpp"
#include "deriva/llm.hpp"
#include "deriva/oracle.hpp"
#include "deriva/table.hpp"

namespace deriva::workflow {

enum class Mode { Dsl, Sandbox };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

struct WorkflowConfig {
  std::string target_column;
  /// Columns that must be clean in the sampled block besides the target; empty means every numeric column.
  std::vector<std::string> input_columns;
  std::size_t k = 20;
  std::size_t lambda = 2;
  std::size_t chunk_size = 30;
  int retry_limit = 3;
  double epsilon = 0.01;
  /// Leading rows of the clean block that are never masked (window warmup).
  std::size_t warmup_rows = 0;
  Mode mode = Mode::Dsl;
  /// Shell template with {program_path} {input_csv} {output_csv}; sandbox mode only.
  std::string sandbox_command;
  std::uint64_t sample_seed = 0;
  std::uint64_t mask_seed = 1;
  int recursion_budget = dsl::kDefaultRecursionBudget;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Defaults for a known formula: target, inputs, epsilon and warmup taken from the FormulaSpec.
WorkflowConfig config_for(const oracle::FormulaSpec& spec);

nlohmann::json to_json(const WorkflowConfig& c);
/// Fields absent from `j` keep the values in `base`.
WorkflowConfig workflow_config_from_json(const nlohmann::json& j, WorkflowConfig base = {});

struct Sample {
  Table clean;
  std::size_t clean_start = 0;
  std::vector<Table> chunks;
  std::vector<std::size_t> chunk_starts;
};

/// Uniformly chosen contiguous k-row block with no Missing in the relevant columns, plus
/// consecutive chunk_size slices of the whole table. Throws NoCleanBlock.
Sample sample_clean_and_chunk(const Table& table, const WorkflowConfig& config);

/// Masks lambda target cells of the clean block outside its warmup prefix. Throws NotEnoughRows.
oracle::MaskedTable mask_clean_subset(const Table& clean, const WorkflowConfig& config);

struct CellVerdict {
  CellLocation location;
  std::optional<double> imputed;
  std::string error;
  double truth = 0.0;
  bool matched = false;
};

struct CloseMatchVerdict {
  std::vector<CellVerdict> per_cell;
  bool all_matched = false;
  /// Non-masked cells that differ from the masked input.
  std::size_t contaminated_cells = 0;
};

bool close_match(double imputed, double truth, double epsilon);

/// matched <=> the imputed cell holds a number within epsilon of truth. Throws ShapeMismatch.
CloseMatchVerdict evaluate_close_match(const Table& imputed, const oracle::MaskRecord& record, double epsilon);
/// Same, and also fails the verdict when any cell outside the record differs from `masked`.
CloseMatchVerdict evaluate_close_match(const Table& imputed, const Table& masked, const oracle::MaskRecord& record,
                                       double epsilon);

/// Backend plus the exchange log of one run.
class Session {
 public:
  Session(llm::ChatBackend& backend, llm::PromptStyle style) : backend_(backend), style_(style) {}

  std::string ask(llm::TemplateId tmpl, const std::map<std::string, std::string>& vars, std::string_view label);

  llm::PromptStyle style() const { return style_; }
  std::string_view marker() const { return llm::marker_for(style_); }
  const std::vector<llm::ChatExchange>& transcript() const { return transcript_; }

 private:
  llm::ChatBackend& backend_;
  llm::PromptStyle style_;
  std::vector<llm::ChatExchange> transcript_;
};

std::string generate_sketch(Session& session, const Table& masked);

struct GeneratedCode {
  std::string source;
  std::optional<dsl::FormulaProgram> program;  // dsl mode
};

/// Throws MarkerNotFound, or ParseError in dsl mode.
GeneratedCode generate_code(Session& session, std::string_view sketch, const Table& masked, const WorkflowConfig& config);

/// Throws MalformedReflection.
llm::Reflection reflect_step(Session& session, std::string_view wrong_sketch, const Table& masked);

struct Attempt {
  std::size_t index = 0;
  std::string sketch_text;
  /// Diagnosis from the reflection that produced this sketch.
  std::optional<std::string> diagnosis;
  std::string program_source;
  /// Stage failure before or during evaluation, e.g. "code_gen: MarkerNotFound: ...".
  std::optional<std::string> failure;
  CloseMatchVerdict verdict;
};

struct Outcome {
  bool success = false;
  std::optional<dsl::FormulaProgram> program;
  /// Canonical DSL text, or the summarized sandbox program.
  std::string program_text;
  std::string description;
  std::string reason;
};

struct WorkflowRun {
  WorkflowConfig config;
  std::vector<llm::ChatExchange> transcript;
  std::vector<Attempt> attempts;
  Outcome outcome;
};

nlohmann::json to_json(const CloseMatchVerdict& v);
nlohmann::json to_json(const Attempt& a);
nlohmann::json attempts_to_json(const std::vector<Attempt>& attempts);

/// Sketch, code, evaluate, reflect; at most retry_limit + 1 attempts. Fills attempts and outcome,
/// leaving program_text empty for the summarizer.
WorkflowRun run_sketch_loop(Session& session, const Table& masked, const oracle::MaskRecord& record,
                            const WorkflowConfig& config);

/// Fills run.outcome.program_text (and description in dsl mode) for a successful run.
void summarize_program(Session& session, WorkflowRun& run, const WorkflowConfig& config);

struct Execution {
  Table table;
  std::vector<dsl::CellResult> cells;
};

/// Applies the final program to every chunk. Throws SandboxFailure, ContaminatedOutput.
Execution execute_on_table(const Outcome& outcome, const Table& table, const Sample& sample,
                           const WorkflowConfig& config);

/// Runs a sandbox program on one table and returns its output table.
/// Throws SandboxFailure, ShapeMismatch, ContaminatedOutput.
Table run_sandbox(const std::string& command_template, const std::string& program, const Table& input,
                  const std::string& target_column);

/// Error raised by impute, tagged with the stage that failed.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.code(), "[" + stage + "] " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct ImputeOutput {
  Table table;
  WorkflowRun run;
  /// One entry per Missing target cell of the input; empty when the run failed.
  std::vector<dsl::CellResult> cells;
  std::optional<Sample> sample;
};

/// Whole pipeline. Throws StageError; NoMissingValues, UnknownColumn, KindMismatch before any backend call.
ImputeOutput impute(const Table& table, const WorkflowConfig& config, llm::ChatBackend& backend);

/// transcript.json, attempts.json, final_program.dsl|.txt, imputed.csv, report.json.
void write_run_artifacts(const std::filesystem::path& dir, const ImputeOutput& out, const nlohmann::json& report);

}  // namespace deriva::workflow
