#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deriva/oracle.hpp"

namespace deriva::cli {

enum ExitCode : int { kSuccess = 0, kMethodFailure = 1, kUsageError = 2 };

/// Entry point of the `deriva` binary. Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Scripted responses that answer every step with the formula's reference program.
std::map<std::string, std::vector<std::string>> canonical_fixture(const oracle::FormulaSpec& spec);

/// Bench suites compiled into the binary: "zero-rmse".
nlohmann::json builtin_suite(std::string_view name);

}  // namespace deriva::cli
