#pragma once

#include <stdexcept>
#include <string>

namespace flsim {

// Error categories used across the framework. The CLI maps these onto
// process exit codes (config -> 2, runtime -> 3).
enum class ErrorCode {
    MissingSection,
    UnknownDataset,
    UnknownPartitioner,
    UnknownStrategy,
    UnknownConsensus,
    UnknownTopic,
    InvalidValue,
    DuplicateStrategy,
    DuplicateConsensus,
    LayoutMismatch,
    EmptyDataset,
    EmptyUpdateSet,
    EmptyInput,
    ZeroTotalSamples,
    MissingExtraState,
    IllegalTransition,
    NoAggregates,
    IoError,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}

    ErrorCode code() const { return code_; }

    bool is_config_error() const {
        switch (code_) {
        case ErrorCode::MissingSection:
        case ErrorCode::UnknownDataset:
        case ErrorCode::UnknownPartitioner:
        case ErrorCode::UnknownStrategy:
        case ErrorCode::UnknownConsensus:
        case ErrorCode::InvalidValue:
            return true;
        default:
            return false;
        }
    }

private:
    ErrorCode code_;
};

inline Error missing_section(const std::string& name) {
    return Error(ErrorCode::MissingSection, "missing required section: " + name);
}

inline Error invalid_value(const std::string& path, const std::string& reason) {
    return Error(ErrorCode::InvalidValue, path + ": " + reason);
}

inline Error layout_mismatch(const std::string& what) {
    return Error(ErrorCode::LayoutMismatch, "parameter layout mismatch: " + what);
}

} // namespace flsim
