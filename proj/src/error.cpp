#include "sarnet/error.hpp"

namespace sarnet {

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(name(code)) + ": " + message), code_(code) {}

ErrorClass Error::error_class() const noexcept {
    switch (code_) {
    case Errc::InvalidConfig:
        return ErrorClass::Config;
    case Errc::IoFailure:
        return ErrorClass::Io;
    case Errc::NonFiniteLoss:
        return ErrorClass::Numeric;
    default:
        return ErrorClass::Data;
    }
}

const char* Error::name(Errc code) noexcept {
    switch (code) {
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::IoFailure: return "IoFailure";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::NonMonotonicTime: return "NonMonotonicTime";
    case Errc::EmptyAfterCleaning: return "EmptyAfterCleaning";
    case Errc::InvalidFpt: return "InvalidFpt";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::UnknownRunId: return "UnknownRunId";
    case Errc::InvalidWindow: return "InvalidWindow";
    case Errc::AllZeroWindow: return "AllZeroWindow";
    case Errc::ConstantSeries: return "ConstantSeries";
    case Errc::BadWindowLength: return "BadWindowLength";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::RunTooShort: return "RunTooShort";
    case Errc::RefTooShort: return "RefTooShort";
    case Errc::EmptySegment: return "EmptySegment";
    case Errc::TooFewRows: return "TooFewRows";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ConstantTarget: return "ConstantTarget";
    case Errc::NoScorablePoints: return "NoScorablePoints";
    }
    return "UnknownError";
}

void raise(Errc code, const std::string& message) {
    throw Error(code, message);
}

} // namespace sarnet
