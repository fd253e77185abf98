#include "qforage/error.hpp"

namespace qforage {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::DenseCapExceeded: return "DenseCapExceeded";
        case ErrorKind::NotNormalized: return "NotNormalized";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::WeightNotNormalized: return "WeightNotNormalized";
        case ErrorKind::EmptyQuery: return "EmptyQuery";
        case ErrorKind::RankTooLarge: return "RankTooLarge";
        case ErrorKind::NoCandidates: return "NoCandidates";
        case ErrorKind::NonFiniteScore: return "NonFiniteScore";
        case ErrorKind::DimensionNotDivisible: return "DimensionNotDivisible";
        case ErrorKind::InvalidLabel: return "InvalidLabel";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::MissingPositiveCandidate: return "MissingPositiveCandidate";
        case ErrorKind::BadLabel: return "BadLabel";
        case ErrorKind::SpecInvalid: return "SpecInvalid";
        case ErrorKind::EmptyCorpus: return "EmptyCorpus";
        case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorKind::VersionMismatch: return "VersionMismatch";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

namespace {
std::string decorate(ErrorKind kind, const std::string& message, std::size_t line) {
    std::string out = to_string(kind);
    if (line != 0) out += " (line " + std::to_string(line) + ")";
    out += ": ";
    out += message;
    return out;
}
}  // namespace

Error::Error(ErrorKind kind, const std::string& message, std::size_t line)
    : std::runtime_error(decorate(kind, message, line)), kind_(kind), line_(line) {}

}  // namespace qforage
