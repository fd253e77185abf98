#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qforage {

enum class ErrorKind {
    EmptyInput,
    DenseCapExceeded,
    NotNormalized,
    ShapeMismatch,
    DimensionMismatch,
    WeightNotNormalized,
    EmptyQuery,
    RankTooLarge,
    NoCandidates,
    NonFiniteScore,
    DimensionNotDivisible,
    InvalidLabel,
    ParseError,
    MissingPositiveCandidate,
    BadLabel,
    SpecInvalid,
    EmptyCorpus,
    IndexOutOfRange,
    VersionMismatch,
    ConfigError,
    IoError,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::size_t line = 0);

    ErrorKind kind() const noexcept { return kind_; }
    // 1-based source line for parse failures, 0 otherwise.
    std::size_t line() const noexcept { return line_; }

private:
    ErrorKind kind_;
    std::size_t line_;
};

}  // namespace qforage
