#pragma once

#include <stdexcept>
#include <string>

namespace sarnet {

// Error classes map 1:1 onto CLI exit codes.
enum class ErrorClass : int {
    Config = 2,
    Io = 3,
    Data = 4,
    Numeric = 5,
};

enum class Errc {
    InvalidConfig,
    IoFailure,
    MissingColumn,
    NonMonotonicTime,
    EmptyAfterCleaning,
    InvalidFpt,
    SchemaMismatch,
    UnknownRunId,
    InvalidWindow,
    AllZeroWindow,
    ConstantSeries,
    BadWindowLength,
    NonFiniteLoss,
    RunTooShort,
    RefTooShort,
    EmptySegment,
    TooFewRows,
    LengthMismatch,
    ConstantTarget,
    NoScorablePoints,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message);

    Errc code() const noexcept { return code_; }
    ErrorClass error_class() const noexcept;
    int exit_code() const noexcept { return static_cast<int>(error_class()); }

    static const char* name(Errc code) noexcept;

private:
    Errc code_;
};

[[noreturn]] void raise(Errc code, const std::string& message);

} // namespace sarnet
