#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deriva {

enum class Errc {
  // tabular
  EmptyInput,
  EmptyColumnName,
  RaggedRow,
  DuplicateColumn,
  UnknownColumn,
  OutOfBounds,
  KindMismatch,
  // formula language
  SyntaxError,
  UnknownIdentifier,
  DuplicateLet,
  ArityError,
  InvalidWindow,
  WindowUnderflow,
  MissingOperand,
  DivisionByZero,
  RecursionExhausted,
  SelfReferenceForward,
  NonFiniteResult,
  // oracles / synthesis
  WarmupRow,
  MissingInput,
  CyclicDerivation,
  UnknownFormula,
  NotEnoughRows,
  InvalidSpec,
  // gateway
  MissingVariable,
  UnknownPlaceholder,
  AuthMissing,
  HttpError,
  FixtureExhausted,
  Timeout,
  MarkerNotFound,
  MalformedReflection,
  // workflow
  NoCleanBlock,
  NoMissingValues,
  ShapeMismatch,
  SandboxFailure,
  ContaminatedOutput,
  // metrics
  EmptyOutcomes,
  AllExcluded,
  // cli / io
  MissingArtifact,
  InvalidConfig,
  Io,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace deriva
