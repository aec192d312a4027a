#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace todprime {

// Stable numeric values: these cross the C boundary as tp_status.
enum class ErrorCode : int {
    Ok = 0,
    InvalidArgument = 1,
    Parse = 2,
    Schema = 3,
    DuplicateId = 4,
    InsufficientData = 5,
    BudgetExceeded = 6,
    Precondition = 7,
    BackendUnavailable = 8,
    ContextOverflow = 9,
    Protocol = 10,
    UnknownPrompt = 11,
    Config = 12,
    Io = 13,
    Internal = 14,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Malformed act string. `offset` is the 1-based position of the offending
/// byte; errors at end of input report size + 1.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t offset)
        : Error(ErrorCode::Parse, message + " at offset " + std::to_string(offset)),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Dataset record failed validation. `line` is 1-based; 0 means file-level.
class SchemaError : public Error {
public:
    SchemaError(const std::string& message, std::size_t line)
        : Error(ErrorCode::Schema,
                line == 0 ? message : "line " + std::to_string(line) + ": " + message),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace todprime
