#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ispw {

enum class ErrorCode {
    InvalidDataset,
    InvalidConfig,
    NoEvents,
    TooFewEvents,
    DegenerateWeight,
    NonFiniteObjective,
    SingularDesign,
    DomainError,
    AllFitsFailed,
    CalibrationFailed,
    MissingColumn,
    NonNumericCell,
    EmptyFile,
    IoError,
};

std::string_view to_string(ErrorCode code);

// Input errors map to CLI exit code 2, numerical failures to 3.
bool is_input_error(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace ispw
