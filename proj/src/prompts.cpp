#include <cctype>

#include "deriva/llm.hpp"

namespace deriva::llm {

namespace {

constexpr const char* kDomainSketchPython = R"P(Assume that you are a data scientist. I offer you a table in CSV form with missing values denoted as NaN. The first row is the variables' names it contains, and the separator of this CSV format file is char ",". Suggest a solution to fill in each missing value, denoted by NaN. You must sketch your solution into the following template for each missing value you found.

Process all the steps and Give Python code solutions for each missing value. This is extremely important. Omitting any steps of any missing value is forbidden.

Step 1 Finding Missing value: find the location of the missing value and describe the missing value, outputting the entire row where the missing values are located in this step.

Step 2 Finding related Columns: Find related Columns that are related to the missing value column you are filling. These related Columns are helpful for the imputation of missing values. Outputting the names of these related Columns in this step.

Step 3 Drafting Solution: Using the related Columns you find in Step 2, draft the solution for missing value imputation. The solution should be based on the related columns you find. Outputting the solution.

Step 4 Calculating Intermediate Values: Check if there were unknown variables in the solution. If there were, calculate the intermediate values of the intermediate Variable missing and needed in the solution. Output the calculation process of all the intermediate values in this step.

Step 5 Finding Related Rows: Find the values of other rows in the table that are needed in the imputation. Outputting all the values you find in this step.

Step 6 Calculating and Verifying the parameters: Check if there were unknown or unsure parameters in the solution for missing value imputation. You need to calculate and verify these parameters based on rows without missing values. Find 3 rows as examples for you to calculate and verify the parameters. Output the parameters you get and the rows you used in this step.

Step 7 Use results from step 1 to step 6 and rebuild the Solution in Python code and combine all the steps and Python code you generated in this new Python code. When you rebuild the code, you must make sure the value for imputation is in the same row and column of the missing value. Remember the index in Python is 0-based, the first number starts with 0. Generate the rebuilt solution in Python code way. So be extremely careful with the row index when rebuilding your Python code. And write your code in this format:

### Python

Your Python code for rebuilding the solution

### Python

Process all the steps and Give Python code solutions for each missing value. This is extremely important. Omitting any steps of any missing value is forbidden.
Here is the data:

{data})P";

constexpr const char* kCodeGenPython = R"P(Assume you are a code rewriter, you are given a Python code sketch for imputation task on the given data. The new Python code you rewrite should take the given data for input and fill in the missing value of it.
When you rewrite the code, you must slice the dataset and use the same row or column index in the given Python code sketch. Trust the Python code in the given sketch. You must turn this data as DataFrame of pandas in your Python code. The Python code needs to save the dataset in csv format after imputation in this path {save_path}. Here is the requirement:

Give only the Python code for your reply. Do not generate any other information. And write your code in this format:

### Python

Put only your rewritten Python code here.

### Python

Here is the Python code sketch for you to rewrite:

{code}

You must turn this data as DataFrame in your Python code.

Here is the data: {data})P";

constexpr const char* kReflectorBody = R"P(You are an advanced reasoning agent that can improve based on self-reflection. You will be given a previous sketch trial in which you were required to generate a solution for missing value imputation for the given dirty table. You were unsuccessful in imputing missing values in the dirty table for some reason.

Here are some hints for your reflection:

1. using the wrong solution, try to use your domain knowledge in the field related to this data and fill in the missing value with the calculation based on other variables

2. using the wrong rows or columns when generating the solution, please reflect the rows and columns you used for imputation. For example, you should use data from the second row to the fourth row, but you use data from the first row to the third row.

3. remember the index in {index_language} is 0-based.

Here is the wrong sketch to reflect:

{wrong_sketch}

Here is the dirty data:

{dirty_data}

Requirement:

In a few sentences, Diagnose a possible reason for failure or phrasing discrepancy. Take the hints as examples and Give a new sketch for the missing value imputation of this dirty table. The new reflected sketch must follow the same steps as the wrong sketch, this is extremely important. You MUST Return your answer in this Format:

### Diagnosis:

Write your diagnosis here

### New Sketch:

Write your new sketch here)P";

constexpr const char* kSummarizerPython = R"P(Assume you are a code summarizer, you are given a code focus on the imputation of missing value in a particular dataset. Please summarize this code into a function, so it can take any dirty dataset with the same structure. The input of the function is the dirty dataset, {clean_data_save_path}.

When you are summarizing the code, pay attention to the following situation:

1. You need to find the missing values index of the dirty data in the Python function.

2. There can be more than 1 missing value in the given new dirty data, when you rewrite the given code, make sure it can impute multiple missing values in the given dataset.

3. Remember the location of missing values in the new dirty data is not the same as the code provided. Change the fixed index of the provided code into indexes capable of any location.

Here is the requirement:

The name of the function is impute_missing_value. Give only the Python code for your reply. Do not generate any other information. Do not write any explanation. And write your code in this format:

### Python

Put only your rewritten Python code here.

### Python

Here is the code need to be summarized:

{code})P";

// The formula variants keep the prompts step for step; only the output block marker and the
// description of the code format change.
constexpr const char* kFormulaGrammar = R"P(The formula language has this grammar (a line starting with # is a comment):
  program  := letdef* targetdef
  letdef   := "let" NAME "=" expr ";"
  targetdef:= "target" NAME "=" expr ";"
  expr     := term (("+"|"-") term)*
  term     := factor (("*"|"/") factor)*
  factor   := NUMBER | ref | call | "(" expr ")" | "-" factor
  ref      := NAME "[" "t" (("+"|"-") INT)? "]" | NAME
  call     := ("mean"|"sum"|"min"|"max") "(" expr "," SINT "," SINT ")"
            | ("sqrt"|"abs") "(" expr ")"
            | ("pow"|"max2"|"min2") "(" expr "," expr ")"
A reference close[t] is the close column in the row being imputed, close[t-1] the row above it.
mean(x, lo, hi) averages x over rows t+lo .. t+hi inclusive, e.g. mean(close[t], -4, 0) is the average of the current row and the four rows above it.
The target NAME is the column with missing values; the program computes the missing value of any row from the other cells of the table.)P";

constexpr const char* kDomainSketchFormula = R"P(Assume that you are a data scientist. I offer you a table in CSV form with missing values denoted as NaN. The first row is the variables' names it contains, and the separator of this CSV format file is char ",". Suggest a solution to fill in each missing value, denoted by NaN. You must sketch your solution into the following template for each missing value you found.

Process all the steps and Give formula program solutions for each missing value. This is extremely important. Omitting any steps of any missing value is forbidden.

Step 1 Finding Missing value: find the location of the missing value and describe the missing value, outputting the entire row where the missing values are located in this step.

Step 2 Finding related Columns: Find related Columns that are related to the missing value column you are filling. These related Columns are helpful for the imputation of missing values. Outputting the names of these related Columns in this step.

Step 3 Drafting Solution: Using the related Columns you find in Step 2, draft the solution for missing value imputation. The solution should be based on the related columns you find. Outputting the solution.

Step 4 Calculating Intermediate Values: Check if there were unknown variables in the solution. If there were, calculate the intermediate values of the intermediate Variable missing and needed in the solution. Output the calculation process of all the intermediate values in this step.

Step 5 Finding Related Rows: Find the values of other rows in the table that are needed in the imputation. Outputting all the values you find in this step.

Step 6 Calculating and Verifying the parameters: Check if there were unknown or unsure parameters in the solution for missing value imputation. You need to calculate and verify these parameters based on rows without missing values. Find 3 rows as examples for you to calculate and verify the parameters. Output the parameters you get and the rows you used in this step.

Step 7 Use results from step 1 to step 6 and rebuild the Solution as a formula program and combine all the steps you generated in this new formula program. When you rebuild the formula, you must make sure the value for imputation is in the same row and column of the missing value. Row offsets are relative to the row being imputed: t is that row, t-1 is the row above it. So be extremely careful with the row offsets when rebuilding your formula program.
{grammar}
And write your formula program in this format:

### FORMULA

Your formula program for rebuilding the solution

### FORMULA

Process all the steps and Give formula program solutions for each missing value. This is extremely important. Omitting any steps of any missing value is forbidden.
Here is the data:

{data})P";

constexpr const char* kCodeGenFormula = R"P(Assume you are a code rewriter, you are given a formula program sketch for imputation task on the given data. The new formula program you rewrite should take the given data for input and fill in the missing value of it.
When you rewrite the formula, you must use the same row offsets and columns as in the given formula program sketch. Trust the formula program in the given sketch. The engine saves the dataset in csv format after imputation in this path {save_path}. Here is the requirement:
{grammar}
Give only the formula program for your reply. Do not generate any other information. And write your formula program in this format:

### FORMULA

Put only your rewritten formula program here.

### FORMULA

Here is the formula program sketch for you to rewrite:

{code}

Here is the data: {data})P";

constexpr const char* kSummarizerFormula = R"P(Assume you are a code summarizer, you are given a formula program focused on the imputation of missing value in a particular dataset. The program already works on any dirty dataset with the same structure. The input of the program is the dirty dataset, {clean_data_save_path}.

When you are summarizing the formula program, pay attention to the following situation:

1. You need to explain how the missing values of the target column are found.

2. There can be more than 1 missing value in the given new dirty data; explain how the program imputes each of them.

3. Remember the location of missing values in the new dirty data is not the same as in the data used to validate the program.

Here is the requirement:

Describe in a few sentences what the formula computes, then restate the program unchanged in this format:

### FORMULA

Put the formula program here.

### FORMULA

Here is the formula program need to be summarized:

{code})P";

std::string with_grammar(const char* body) {
  std::string out = body;
  const std::string key = "{grammar}";
  auto pos = out.find(key);
  if (pos != std::string::npos) out.replace(pos, key.size(), kFormulaGrammar);
  return out;
}

std::string with_index_language(const char* body, std::string_view lang) {
  std::string out = body;
  const std::string key = "{index_language}";
  auto pos = out.find(key);
  if (pos != std::string::npos) out.replace(pos, key.size(), lang);
  return out;
}

}  // namespace

const PromptTemplate& builtin_template(TemplateId id, PromptStyle style) {
  static const PromptTemplate python[] = {
      {TemplateId::DomainSketch, kDomainSketchPython, {"data"}},
      {TemplateId::CodeGen, kCodeGenPython, {"save_path", "code", "data"}},
      {TemplateId::Reflector, with_index_language(kReflectorBody, "Python"), {"wrong_sketch", "dirty_data"}},
      {TemplateId::Summarizer, kSummarizerPython, {"clean_data_save_path", "code"}},
  };
  static const PromptTemplate formula[] = {
      {TemplateId::DomainSketch, with_grammar(kDomainSketchFormula), {"data"}},
      {TemplateId::CodeGen, with_grammar(kCodeGenFormula), {"save_path", "code", "data"}},
      {TemplateId::Reflector, with_index_language(kReflectorBody, "the CSV data rows"),
       {"wrong_sketch", "dirty_data"}},
      {TemplateId::Summarizer, kSummarizerFormula, {"clean_data_save_path", "code"}},
  };
  const auto i = static_cast<std::size_t>(id);
  return style == PromptStyle::Python ? python[i] : formula[i];
}

std::string_view marker_for(PromptStyle style) {
  return style == PromptStyle::Python ? kPythonMarker : kFormulaMarker;
}

namespace {

bool placeholder_char(char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; }

// Calls visit(literal_text) and visit_placeholder(name) in order.
template <typename Lit, typename Ph>
void scan_placeholders(std::string_view body, Lit&& literal, Ph&& placeholder) {
  std::size_t i = 0;
  std::size_t lit_start = 0;
  while (i < body.size()) {
    if (body[i] == '{') {
      std::size_t j = i + 1;
      while (j < body.size() && placeholder_char(body[j])) ++j;
      if (j > i + 1 && j < body.size() && body[j] == '}') {
        literal(body.substr(lit_start, i - lit_start));
        placeholder(body.substr(i + 1, j - i - 1));
        i = j + 1;
        lit_start = i;
        continue;
      }
    }
    ++i;
  }
  literal(body.substr(lit_start));
}

}  // namespace

std::string render_template(const PromptTemplate& tmpl, const std::map<std::string, std::string>& vars) {
  scan_placeholders(
      tmpl.body, [](std::string_view) {},
      [&](std::string_view name) {
        const std::string n(name);
        if (!tmpl.variables.count(n)) throw Error(Errc::UnknownPlaceholder, n);
        if (!vars.count(n)) throw Error(Errc::MissingVariable, n);
      });
  std::string out;
  out.reserve(tmpl.body.size());
  scan_placeholders(
      tmpl.body, [&](std::string_view lit) { out += lit; },
      [&](std::string_view name) { out += vars.at(std::string(name)); });
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      out.push_back(text.substr(pos));
      return out;
    }
    out.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
}

std::string join(const std::vector<std::string_view>& lines, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) out += '\n';
    out += lines[i];
  }
  return out;
}

}  // namespace

std::string extract_block(std::string_view text, std::string_view marker) {
  const auto want = trim(marker);
  const auto lines = lines_of(text);
  std::size_t open = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]) == want) {
      open = i;
      break;
    }
  }
  if (open == lines.size()) throw Error(Errc::MarkerNotFound, "no line equal to '" + std::string(want) + "'");
  for (std::size_t i = open + 1; i < lines.size(); ++i) {
    if (trim(lines[i]) == want) return join(lines, open + 1, i);
  }
  return join(lines, open + 1, lines.size());
}

Reflection parse_reflection(std::string_view text) {
  const auto lines = lines_of(text);
  auto heading = [&](std::string_view prefix) -> std::size_t {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (trim(lines[i]).substr(0, prefix.size()) == prefix) return i;
    }
    return lines.size();
  };
  const auto sketch_at = heading("### New Sketch");
  if (sketch_at == lines.size()) throw Error(Errc::MalformedReflection, "reply has no '### New Sketch:' section");

  auto tail_of = [&](std::size_t i, std::string_view prefix) {
    auto rest = trim(lines[i]).substr(prefix.size());
    if (!rest.empty() && rest.front() == ':') rest.remove_prefix(1);
    return std::string(trim(rest));
  };

  Reflection r;
  std::string sketch = tail_of(sketch_at, "### New Sketch");
  const auto body = join(lines, sketch_at + 1, lines.size());
  if (!sketch.empty() && !body.empty()) sketch += '\n';
  sketch += body;
  r.new_sketch = std::string(trim(sketch));
  if (r.new_sketch.empty()) throw Error(Errc::MalformedReflection, "'### New Sketch:' section is empty");

  const auto diag_at = heading("### Diagnosis");
  if (diag_at < sketch_at) {
    std::string d = tail_of(diag_at, "### Diagnosis");
    const auto dbody = join(lines, diag_at + 1, sketch_at);
    if (!d.empty() && !dbody.empty()) d += '\n';
    d += dbody;
    r.diagnosis = std::string(trim(d));
  } else {
    r.diagnosis = std::string(trim(join(lines, 0, sketch_at)));
  }
  return r;
}

}  // namespace deriva::llm
