#include "pamtriage/error.hpp"

namespace pamtriage {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::CorruptHeader: return "CorruptHeader";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::ExcessiveClipping: return "ExcessiveClipping";
    case ErrorKind::RateMismatch: return "RateMismatch";
    case ErrorKind::BandCountMismatch: return "BandCountMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateSnippetRef: return "DuplicateSnippetRef";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::TemplateTooLong: return "TemplateTooLong";
    case ErrorKind::UnknownClip: return "UnknownClip";
    case ErrorKind::ClassTooSmall: return "ClassTooSmall";
    case ErrorKind::SingleClassInput: return "SingleClassInput";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::UnknownClass: return "UnknownClass";
    case ErrorKind::RefMismatch: return "RefMismatch";
    case ErrorKind::EmptyGrid: return "EmptyGrid";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::UnknownSnippet: return "UnknownSnippet";
    case ErrorKind::IllegalTransition: return "IllegalTransition";
    case ErrorKind::NoClassSurvives: return "NoClassSurvives";
  }
  return "Unknown";
}

}  // namespace pamtriage
