#pragma once

#include <stdexcept>
#include <string>

namespace msstab {

/// Failure categories surfaced by the library. The CLI maps each one to a
/// distinct process exit code.
enum class ErrorKind {
    Validation,
    DegenerateDenominator,
    ZeroDrift,
    Overflow,
    Io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Validation:            return "validation";
        case ErrorKind::DegenerateDenominator: return "degenerate denominator";
        case ErrorKind::ZeroDrift:             return "zero drift";
        case ErrorKind::Overflow:              return "overflow";
        case ErrorKind::Io:                    return "i/o";
    }
    return "unknown";
}

}  // namespace msstab
