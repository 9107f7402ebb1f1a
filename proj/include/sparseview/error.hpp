#pragma once

#include <stdexcept>
#include <string>

namespace sparseview {

enum class ErrorCode {
    InvalidArgument,
    ShapeMismatch,
    MissingFile,
    MalformedJson,
    InvariantViolation,
    NumericFailure,
};

const char *to_string(ErrorCode code);

// Every library failure is reported through this type; the code lets the CLI
// separate validation problems (exit 2) from numeric ones (exit 3).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string &message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string &message) {
    if (!condition) throw Error(code, message);
}

}  // namespace sparseview
