#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace srf {

enum class ErrorCode {
  TemplateMismatch,
  EmptyEntity,
  Undecomposable,
  ParseError,
  UnknownRelation,
  MissingAnchor,
  InvalidBox,
  Infeasible,
  ShapeMismatch,
  ProtocolError,
  BackendError,
  Timeout,
  NonFiniteGradient,
  EmptyInput,
  MissingLayout,
  InvalidArgument,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::TemplateMismatch: return "TemplateMismatch";
    case ErrorCode::EmptyEntity: return "EmptyEntity";
    case ErrorCode::Undecomposable: return "Undecomposable";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownRelation: return "UnknownRelation";
    case ErrorCode::MissingAnchor: return "MissingAnchor";
    case ErrorCode::InvalidBox: return "InvalidBox";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingLayout: return "MissingLayout";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library. `index` carries the position the
/// failure refers to: clause index, 1-based line number, byte offset or stage
/// index depending on the code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(compose(code, message, index)),
        code_(code),
        index_(index),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  static std::string compose(ErrorCode code, const std::string& message,
                             std::optional<std::size_t> index) {
    std::string out(to_string(code));
    if (index) out += "[" + std::to_string(*index) + "]";
    out += ": ";
    out += message;
    return out;
  }

  ErrorCode code_;
  std::optional<std::size_t> index_;
  std::string detail_;
};

}  // namespace srf
