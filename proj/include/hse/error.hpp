#pragma once

#include <stdexcept>
#include <string>

namespace hse {

/// Machine-readable failure categories. The CLI maps Usage/Validation/Schema
/// to exit code 2, everything else to exit code 1.
enum class ErrorCategory {
    Usage,
    Validation,
    Io,
    Schema,
    Integrity,
    Encoding,
    PlanTooLarge,
    Fit,
    Conditioning,
    Mismatch,
    Protocol,
    Runtime,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const { return category_; }

    static const char* category_name(ErrorCategory c) {
        switch (c) {
            case ErrorCategory::Usage: return "usage";
            case ErrorCategory::Validation: return "validation";
            case ErrorCategory::Io: return "io";
            case ErrorCategory::Schema: return "schema";
            case ErrorCategory::Integrity: return "integrity";
            case ErrorCategory::Encoding: return "encoding";
            case ErrorCategory::PlanTooLarge: return "plan-too-large";
            case ErrorCategory::Fit: return "fit";
            case ErrorCategory::Conditioning: return "conditioning";
            case ErrorCategory::Mismatch: return "mismatch";
            case ErrorCategory::Protocol: return "protocol";
            case ErrorCategory::Runtime: return "runtime";
        }
        return "runtime";
    }

    const char* category_name() const { return category_name(category_); }

private:
    ErrorCategory category_;
};

}  // namespace hse
