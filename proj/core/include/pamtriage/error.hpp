#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pamtriage {

enum class ErrorKind {
  InvalidArgument,
  // ingest
  UnsupportedFormat,
  CorruptHeader,
  EmptyFile,
  ExcessiveClipping,
  // features
  RateMismatch,
  BandCountMismatch,
  DimensionMismatch,
  ParseError,
  DuplicateSnippetRef,
  // reduce
  TooFewPoints,
  // detect
  TemplateTooLong,
  UnknownClip,
  // classify
  ClassTooSmall,
  SingleClassInput,
  NonFiniteLoss,
  UnknownClass,
  // eval
  RefMismatch,
  EmptyGrid,
  IoError,
  // store
  UnknownSnippet,
  IllegalTransition,
  NoClassSurvives,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pamtriage
