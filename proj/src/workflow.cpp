#include "deriva/workflow.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "deriva/random.hpp"

namespace deriva::workflow {

namespace fs = std::filesystem;

std::string_view to_string(Mode m) { return m == Mode::Dsl ? "dsl" : "sandbox"; }

Mode mode_from_string(std::string_view s) {
  if (s == "dsl") return Mode::Dsl;
  if (s == "sandbox") return Mode::Sandbox;
  throw Error(Errc::InvalidConfig, "unknown mode '" + std::string(s) + "'");
}

void WorkflowConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(Errc::InvalidConfig, m); };
  if (target_column.empty()) bad("target_column is empty");
  if (retry_limit < 0) bad("retry_limit must be >= 0");
  if (lambda < 1) bad("lambda must be >= 1");
  if (k <= lambda + warmup_rows) bad("k must exceed lambda + warmup_rows");
  if (chunk_size < 1) bad("chunk_size must be >= 1");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) bad("epsilon must be a positive number");
  if (recursion_budget < 1) bad("recursion_budget must be >= 1");
  if (mode == Mode::Sandbox && sandbox_command.empty()) bad("sandbox mode needs sandbox_command");
}

WorkflowConfig config_for(const oracle::FormulaSpec& spec) {
  WorkflowConfig c;
  c.target_column = spec.target_column;
  c.input_columns = spec.input_columns;
  c.epsilon = spec.epsilon;
  c.warmup_rows = spec.warmup_rows;
  return c;
}

nlohmann::json to_json(const WorkflowConfig& c) {
  nlohmann::json j = {{"target_column", c.target_column},
                      {"input_columns", c.input_columns},
                      {"k", c.k},
                      {"lambda", c.lambda},
                      {"chunk_size", c.chunk_size},
                      {"retry_limit", c.retry_limit},
                      {"epsilon", c.epsilon},
                      {"warmup_rows", c.warmup_rows},
                      {"mode", to_string(c.mode)},
                      {"sample_seed", c.sample_seed},
                      {"mask_seed", c.mask_seed},
                      {"recursion_budget", c.recursion_budget}};
  if (c.mode == Mode::Sandbox) j["sandbox_command"] = c.sandbox_command;
  return j;
}

WorkflowConfig workflow_config_from_json(const nlohmann::json& j, WorkflowConfig c) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "workflow config must be an object");
  try {
    if (j.contains("target_column")) c.target_column = j.at("target_column").get<std::string>();
    if (j.contains("input_columns")) c.input_columns = j.at("input_columns").get<std::vector<std::string>>();
    if (j.contains("k")) c.k = j.at("k").get<std::size_t>();
    if (j.contains("lambda")) c.lambda = j.at("lambda").get<std::size_t>();
    if (j.contains("chunk_size")) c.chunk_size = j.at("chunk_size").get<std::size_t>();
    if (j.contains("retry_limit")) c.retry_limit = j.at("retry_limit").get<int>();
    if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
    if (j.contains("warmup_rows")) c.warmup_rows = j.at("warmup_rows").get<std::size_t>();
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("sandbox_command")) c.sandbox_command = j.at("sandbox_command").get<std::string>();
    if (j.contains("sample_seed")) c.sample_seed = j.at("sample_seed").get<std::uint64_t>();
    if (j.contains("mask_seed")) c.mask_seed = j.at("mask_seed").get<std::uint64_t>();
    if (j.contains("recursion_budget")) c.recursion_budget = j.at("recursion_budget").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("workflow config: ") + e.what());
  }
  return c;
}

// ---- sampling and masking ----

namespace {

std::vector<std::size_t> relevant_columns(const Table& table, const WorkflowConfig& config) {
  std::vector<std::size_t> cols{table.column_index(config.target_column)};
  if (config.input_columns.empty()) {
    for (std::size_t c = 0; c < table.column_count(); ++c)
      if (table.is_numeric(c) && c != cols.front()) cols.push_back(c);
  } else {
    for (const auto& name : config.input_columns) cols.push_back(table.column_index(name));
  }
  return cols;
}

}  // namespace

Sample sample_clean_and_chunk(const Table& table, const WorkflowConfig& config) {
  if (config.k == 0 || config.chunk_size == 0) throw Error(Errc::InvalidConfig, "k and chunk_size must be positive");
  const auto cols = relevant_columns(table, config);

  std::vector<std::size_t> starts;
  std::size_t run = 0;
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    bool clean = true;
    for (auto c : cols) clean = clean && !table.at(r, c).is_missing();
    run = clean ? run + 1 : 0;
    if (run >= config.k) starts.push_back(r + 1 - config.k);
  }
  if (starts.empty())
    throw Error(Errc::NoCleanBlock, "no " + std::to_string(config.k) + " contiguous rows without Missing cells");

  SplitMix64 rng(config.sample_seed);
  Sample s;
  s.clean_start = starts[rng.below(starts.size())];
  s.clean = slice_rows(table, s.clean_start, s.clean_start + config.k);
  for (std::size_t begin = 0; begin < table.row_count(); begin += config.chunk_size) {
    s.chunk_starts.push_back(begin);
    s.chunks.push_back(slice_rows(table, begin, std::min(begin + config.chunk_size, table.row_count())));
  }
  return s;
}

oracle::MaskedTable mask_clean_subset(const Table& clean, const WorkflowConfig& config) {
  return oracle::mask_column(clean, config.target_column, oracle::MaskAmount::of_count(config.lambda),
                             config.mask_seed, config.warmup_rows);
}

// ---- evaluation ----

bool close_match(double imputed, double truth, double epsilon) { return std::fabs(imputed - truth) <= epsilon; }

CloseMatchVerdict evaluate_close_match(const Table& imputed, const oracle::MaskRecord& record, double epsilon) {
  CloseMatchVerdict v;
  v.all_matched = true;
  for (const auto& loc : record.locations) {
    if (loc.row >= imputed.row_count() || loc.column >= imputed.column_count())
      throw Error(Errc::ShapeMismatch, "masked cell outside the imputed table");
    CellVerdict cv;
    cv.location = loc;
    cv.truth = record.truth.at(loc);
    const auto& cell = imputed.at(loc);
    if (cell.is_number()) {
      cv.imputed = cell.as_number();
      cv.matched = close_match(*cv.imputed, cv.truth, epsilon);
    } else {
      cv.error = "cell not imputed";
    }
    v.all_matched = v.all_matched && cv.matched;
    v.per_cell.push_back(std::move(cv));
  }
  return v;
}

CloseMatchVerdict evaluate_close_match(const Table& imputed, const Table& masked, const oracle::MaskRecord& record,
                                       double epsilon) {
  if (imputed.row_count() != masked.row_count() || imputed.columns() != masked.columns())
    throw Error(Errc::ShapeMismatch, "imputed table does not match the masked table's shape");
  auto v = evaluate_close_match(imputed, record, epsilon);
  const std::set<CellLocation> masked_cells(record.locations.begin(), record.locations.end());
  for (std::size_t r = 0; r < masked.row_count(); ++r)
    for (std::size_t c = 0; c < masked.column_count(); ++c)
      if (!masked_cells.count({r, c}) && !imputed.at(r, c).identical(masked.at(r, c))) ++v.contaminated_cells;
  if (v.contaminated_cells > 0) v.all_matched = false;
  return v;
}

// ---- model-facing stages ----

std::string Session::ask(llm::TemplateId tmpl, const std::map<std::string, std::string>& vars,
                         std::string_view label) {
  const auto prompt = llm::render_template(llm::builtin_template(tmpl, style_), vars);
  auto c = llm::complete(backend_, {{llm::Role::User, prompt}}, label);
  transcript_.push_back(std::move(c.exchange));
  return c.text;
}

namespace {
constexpr const char* kSavePath = "imputed.csv";
}

std::string generate_sketch(Session& session, const Table& masked) {
  return session.ask(llm::TemplateId::DomainSketch, {{"data", write_csv(masked)}}, "domain_sketch");
}

GeneratedCode generate_code(Session& session, std::string_view sketch, const Table& masked,
                            const WorkflowConfig& config) {
  const auto reply = session.ask(llm::TemplateId::CodeGen,
                                 {{"save_path", kSavePath}, {"code", std::string(sketch)}, {"data", write_csv(masked)}},
                                 "code_gen");
  GeneratedCode g;
  g.source = llm::extract_block(reply, session.marker());
  if (config.mode == Mode::Dsl) g.program = dsl::parse_program(g.source);
  return g;
}

llm::Reflection reflect_step(Session& session, std::string_view wrong_sketch, const Table& masked) {
  const auto reply = session.ask(llm::TemplateId::Reflector,
                                 {{"wrong_sketch", std::string(wrong_sketch)}, {"dirty_data", write_csv(masked)}},
                                 "reflector");
  return llm::parse_reflection(reply);
}

namespace {

bool recoverable_code_error(Errc c) {
  switch (c) {
    case Errc::MarkerNotFound:
    case Errc::SyntaxError:
    case Errc::UnknownIdentifier:
    case Errc::DuplicateLet:
    case Errc::ArityError:
    case Errc::InvalidWindow:
      return true;
    default:
      return false;
  }
}

bool recoverable_run_error(Errc c) {
  switch (c) {
    case Errc::UnknownColumn:
    case Errc::UnknownIdentifier:
    case Errc::DuplicateLet:
    case Errc::KindMismatch:
    case Errc::SandboxFailure:
    case Errc::ShapeMismatch:
    case Errc::ContaminatedOutput:
      return true;
    default:
      return false;
  }
}

CloseMatchVerdict failed_verdict(const oracle::MaskRecord& record, const std::string& why) {
  CloseMatchVerdict v;
  for (const auto& loc : record.locations) v.per_cell.push_back({loc, std::nullopt, why, record.truth.at(loc), false});
  return v;
}

// Runs one candidate program on the masked block; fills attempt.verdict or attempt.failure.
void try_program(Attempt& a, const GeneratedCode& code, const Table& masked, const oracle::MaskRecord& record,
                 const WorkflowConfig& config) {
  Table result;
  std::map<CellLocation, std::string> cell_errors;
  try {
    if (config.mode == Mode::Dsl) {
      if (code.program->target_column() != config.target_column)
        throw Error(Errc::UnknownColumn, "program targets '" + code.program->target_column() + "', expected '" +
                                             config.target_column + "'");
      auto res = dsl::impute_column(*code.program, masked, config.recursion_budget);
      for (const auto& cr : res.cells)
        if (cr.error) cell_errors[cr.location] = cr.error->message;
      result = std::move(res.table);
    } else {
      result = run_sandbox(config.sandbox_command, code.source, masked, config.target_column);
    }
  } catch (const Error& e) {
    if (!recoverable_run_error(e.code())) throw;
    a.failure = std::string("execute: ") + e.what();
    a.verdict = failed_verdict(record, *a.failure);
    return;
  }
  a.verdict = evaluate_close_match(result, masked, record, config.epsilon);
  for (auto& cv : a.verdict.per_cell) {
    auto it = cell_errors.find(cv.location);
    if (it != cell_errors.end()) cv.error = it->second;
  }
}

}  // namespace

WorkflowRun run_sketch_loop(Session& session, const Table& masked, const oracle::MaskRecord& record,
                            const WorkflowConfig& config) {
  WorkflowRun run;
  run.config = config;
  const auto max_attempts = static_cast<std::size_t>(config.retry_limit) + 1;
  std::string last_sketch;

  while (run.attempts.size() < max_attempts) {
    Attempt a;
    a.index = run.attempts.size();
    if (run.attempts.empty()) {
      a.sketch_text = generate_sketch(session, masked);
    } else {
      try {
        auto r = reflect_step(session, last_sketch, masked);
        a.sketch_text = std::move(r.new_sketch);
        a.diagnosis = std::move(r.diagnosis);
      } catch (const Error& e) {
        if (e.code() != Errc::MalformedReflection) throw;
        a.failure = std::string("reflector: ") + e.what();
        a.verdict = failed_verdict(record, *a.failure);
        run.attempts.push_back(std::move(a));
        continue;
      }
    }
    last_sketch = a.sketch_text;

    std::optional<GeneratedCode> code;
    try {
      code = generate_code(session, a.sketch_text, masked, config);
      a.program_source = code->source;
    } catch (const Error& e) {
      if (!recoverable_code_error(e.code())) throw;
      a.failure = std::string("code_gen: ") + e.what();
      a.verdict = failed_verdict(record, *a.failure);
    }
    if (code) try_program(a, *code, masked, record, config);

    const bool ok = !a.failure && a.verdict.all_matched;
    run.attempts.push_back(std::move(a));
    if (ok) {
      run.outcome.success = true;
      if (code->program) run.outcome.program = code->program;
      run.outcome.program_text.clear();
      run.transcript = session.transcript();
      return run;
    }
  }
  run.outcome.success = false;
  run.outcome.reason = "unable to impute: no program matched every masked cell within epsilon after " +
                       std::to_string(run.attempts.size()) + " attempts";
  run.transcript = session.transcript();
  return run;
}

namespace {

std::string text_before_marker(const std::string& reply, std::string_view marker) {
  auto pos = reply.find(marker);
  std::string head = pos == std::string::npos ? reply : reply.substr(0, pos);
  while (!head.empty() && std::isspace(static_cast<unsigned char>(head.back()))) head.pop_back();
  std::size_t b = 0;
  while (b < head.size() && std::isspace(static_cast<unsigned char>(head[b]))) ++b;
  return head.substr(b);
}

}  // namespace

void summarize_program(Session& session, WorkflowRun& run, const WorkflowConfig& config) {
  if (!run.outcome.success) throw Error(Errc::InvalidConfig, "summarize_program needs a successful run");
  const auto& source = run.attempts.back().program_source;
  if (config.mode == Mode::Dsl) {
    run.outcome.program_text = dsl::format_program(*run.outcome.program);
    try {
      const auto reply = session.ask(llm::TemplateId::Summarizer,
                                     {{"clean_data_save_path", kSavePath}, {"code", run.outcome.program_text}},
                                     "summarizer");
      run.outcome.description = text_before_marker(reply, session.marker());
    } catch (const Error&) {
      run.outcome.description.clear();
    }
  } else {
    const auto reply = session.ask(llm::TemplateId::Summarizer,
                                   {{"clean_data_save_path", kSavePath}, {"code", source}}, "summarizer");
    run.outcome.program_text = llm::extract_block(reply, session.marker());
  }
  run.transcript = session.transcript();
}

// ---- execution ----

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "deriva-sandbox-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw Error(Errc::Io, "cannot create temporary directory");
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

bool same_value(const Cell& a, const Cell& b) {
  if (a.is_number() && b.is_number()) return a.as_number() == b.as_number();
  if (a.is_text() && b.is_text()) return a.as_text() == b.as_text();
  if (a.is_missing() && b.is_missing()) return true;
  // pandas may print a numeric-looking text cell as a number; compare the rendered forms.
  auto render = [](const Cell& c) {
    if (c.is_number()) return format_double(c.as_number());
    return c.is_text() ? c.as_text() : std::string();
  };
  return !a.is_missing() && !b.is_missing() && render(a) == render(b);
}

}  // namespace

Table run_sandbox(const std::string& command_template, const std::string& program, const Table& input,
                  const std::string& target_column) {
  const auto target = input.column_index(target_column);
  TempDir dir;
  const auto program_path = dir.path / "program.py";
  const auto input_csv = dir.path / "input.csv";
  const auto output_csv = dir.path / "output.csv";
  {
    std::ofstream out(program_path, std::ios::binary);
    out << program << '\n';
  }
  write_csv_file(input, input_csv.string());

  std::string cmd = command_template;
  replace_all(cmd, "{program_path}", shell_quote(program_path.string()));
  replace_all(cmd, "{input_csv}", shell_quote(input_csv.string()));
  replace_all(cmd, "{output_csv}", shell_quote(output_csv.string()));
  const auto stderr_path = dir.path / "stderr.txt";
  const std::string full = "cd " + shell_quote(dir.path.string()) + " && ( " + cmd + " ) >" +
                           shell_quote((dir.path / "stdout.txt").string()) + " 2>" + shell_quote(stderr_path.string());
  const int status = std::system(full.c_str());
  const int code = status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status));
  if (code != 0) {
    auto err = read_file(stderr_path);
    if (err.size() > 400) err = "..." + err.substr(err.size() - 400);
    throw Error(Errc::SandboxFailure, "exit " + std::to_string(code) + ": " + err);
  }
  if (!fs::exists(output_csv)) throw Error(Errc::SandboxFailure, "command wrote no output CSV");

  Table produced = [&] {
    try {
      return parse_csv(read_file(output_csv));
    } catch (const Error& e) {
      throw Error(Errc::SandboxFailure, std::string("unreadable output: ") + e.what());
    }
  }();
  if (produced.row_count() != input.row_count() || produced.column_count() != input.column_count())
    throw Error(Errc::ShapeMismatch, "sandbox output shape differs from its input");
  for (std::size_t c = 0; c < input.column_count(); ++c)
    if (produced.columns()[c].name != input.columns()[c].name)
      throw Error(Errc::ShapeMismatch, "sandbox output renamed column '" + input.columns()[c].name + "'");

  Table result = input;
  std::size_t changed = 0;
  for (std::size_t r = 0; r < input.row_count(); ++r) {
    for (std::size_t c = 0; c < input.column_count(); ++c) {
      const auto& before = input.at(r, c);
      const auto& after = produced.at(r, c);
      if (c == target && before.is_missing()) {
        if (after.is_number()) result.set({r, c}, after);
        continue;
      }
      if (!same_value(before, after)) ++changed;
    }
  }
  if (changed > 0)
    throw Error(Errc::ContaminatedOutput, std::to_string(changed) + " cells outside the missing targets changed");
  return result;
}

Execution execute_on_table(const Outcome& outcome, const Table& table, const Sample& sample,
                           const WorkflowConfig& config) {
  if (!outcome.success) throw Error(Errc::InvalidConfig, "execute_on_table needs a successful outcome");
  const auto target = table.column_index(config.target_column);
  Execution ex{table, {}};

  if (config.mode == Mode::Dsl) {
    // Chunks run in ascending order against the whole table, so windows and self-references
    // crossing a chunk boundary see the real neighbouring rows.
    for (std::size_t i = 0; i < sample.chunks.size(); ++i) {
      const auto begin = sample.chunk_starts[i];
      auto res = dsl::impute_rows(*outcome.program, ex.table, begin, begin + sample.chunks[i].row_count(),
                                  config.recursion_budget);
      ex.table = std::move(res.table);
      for (auto& c : res.cells) ex.cells.push_back(std::move(c));
    }
  } else {
    std::vector<Table> parts;
    for (std::size_t i = 0; i < sample.chunks.size(); ++i) {
      const auto& chunk = sample.chunks[i];
      if (missing_locations(chunk, config.target_column).empty()) {
        parts.push_back(chunk);
        continue;
      }
      parts.push_back(run_sandbox(config.sandbox_command, outcome.program_text, chunk, config.target_column));
    }
    ex.table = concat_rows(parts);
    ex.table.set_provenance(table.provenance());
    for (const auto& loc : missing_locations(table, config.target_column)) {
      dsl::CellResult cr{loc, std::nullopt, std::nullopt};
      const auto& cell = ex.table.at(loc);
      if (cell.is_number())
        cr.value = cell.as_number();
      else
        cr.error = dsl::CellError{Errc::SandboxFailure, "sandbox left the cell Missing"};
      ex.cells.push_back(std::move(cr));
    }
  }

  for (std::size_t r = 0; r < table.row_count(); ++r)
    for (std::size_t c = 0; c < table.column_count(); ++c) {
      if (c == target && table.at(r, c).is_missing()) continue;
      if (!ex.table.at(r, c).identical(table.at(r, c)))
        throw Error(Errc::ContaminatedOutput, "row " + std::to_string(r) + " column " + table.columns()[c].name);
    }
  return ex;
}

// ---- whole pipeline ----

namespace {

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

}  // namespace

ImputeOutput impute(const Table& table, const WorkflowConfig& config, llm::ChatBackend& backend) {
  stage("precondition", [&] {
    config.validate();
    const auto col = table.column_index(config.target_column);
    if (!table.is_numeric(col)) throw Error(Errc::KindMismatch, "target column '" + config.target_column + "' is text");
    if (missing_locations(table, config.target_column).empty())
      throw Error(Errc::NoMissingValues, "column '" + config.target_column + "' has no Missing cells");
    for (const auto& name : config.input_columns) table.column_index(name);
  });

  Session session(backend, config.mode == Mode::Dsl ? llm::PromptStyle::Formula : llm::PromptStyle::Python);
  ImputeOutput out;
  out.sample = stage("sample", [&] { return sample_clean_and_chunk(table, config); });
  const auto masked = stage("mask", [&] { return mask_clean_subset(out.sample->clean, config); });
  out.run = stage("loop", [&] { return run_sketch_loop(session, masked.table, masked.record, config); });
  if (!out.run.outcome.success) {
    out.table = table;
    return out;
  }
  stage("summarize", [&] { summarize_program(session, out.run, config); });
  auto ex = stage("execute", [&] { return execute_on_table(out.run.outcome, table, *out.sample, config); });
  out.table = std::move(ex.table);
  out.cells = std::move(ex.cells);
  out.run.transcript = session.transcript();
  return out;
}

// ---- artifacts ----

nlohmann::json to_json(const CloseMatchVerdict& v) {
  auto cells = nlohmann::json::array();
  for (const auto& c : v.per_cell) {
    nlohmann::json j = {{"row", c.location.row},
                        {"column", c.location.column},
                        {"truth", c.truth},
                        {"matched", c.matched}};
    j["imputed"] = c.imputed ? nlohmann::json(*c.imputed) : nlohmann::json(nullptr);
    if (!c.error.empty()) j["error"] = c.error;
    cells.push_back(std::move(j));
  }
  return {{"all_matched", v.all_matched}, {"contaminated_cells", v.contaminated_cells}, {"cells", cells}};
}

nlohmann::json to_json(const Attempt& a) {
  nlohmann::json j = {{"index", a.index},
                      {"sketch_text", a.sketch_text},
                      {"program_source", a.program_source},
                      {"verdict", to_json(a.verdict)}};
  j["diagnosis"] = a.diagnosis ? nlohmann::json(*a.diagnosis) : nlohmann::json(nullptr);
  j["failure"] = a.failure ? nlohmann::json(*a.failure) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json attempts_to_json(const std::vector<Attempt>& attempts) {
  auto arr = nlohmann::json::array();
  for (const auto& a : attempts) arr.push_back(to_json(a));
  return arr;
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + p.string());
  out << text;
}

}  // namespace

void write_run_artifacts(const fs::path& dir, const ImputeOutput& out, const nlohmann::json& report) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "transcript.json", llm::transcript_to_json(out.run.transcript).dump(2) + "\n");
  write_text(dir / "attempts.json", attempts_to_json(out.run.attempts).dump(2) + "\n");
  if (out.run.outcome.success) {
    const auto name = out.run.config.mode == Mode::Dsl ? "final_program.dsl" : "final_program.txt";
    write_text(dir / name, out.run.outcome.program_text + "\n");
    if (!out.run.outcome.description.empty()) write_text(dir / "description.txt", out.run.outcome.description + "\n");
  }
  write_csv_file(out.table, (dir / "imputed.csv").string());
  write_text(dir / "report.json", report.dump(2) + "\n");
}

}  // namespace deriva::workflow
