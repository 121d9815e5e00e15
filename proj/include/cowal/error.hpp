#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cowal {

enum class Errc {
    MissingFile,
    SchemaViolation,
    InconsistentCounts,
    BadMagic,
    TruncatedFile,
    NonFiniteValue,
    ZeroNormRow,
    IoFailure,
    NotADistribution,
    MismatchedGrids,
    EmptyInput,
    KTooLarge,
    TooFewCentroids,
    TooFewPoints,
    ZeroVector,
    EmptySet,
    BudgetExceedsPool,
    MissingScores,
    DegenerateBatch,
    NonFinite,
    ShapeMismatch,
    BadParams,
    NoLabeledData,
    NonPositiveReference,
    MalformedCsv,
    UnknownStrategy,
};

inline std::string_view errc_name(Errc c) {
    switch (c) {
        case Errc::MissingFile: return "MissingFile";
        case Errc::SchemaViolation: return "SchemaViolation";
        case Errc::InconsistentCounts: return "InconsistentCounts";
        case Errc::BadMagic: return "BadMagic";
        case Errc::TruncatedFile: return "TruncatedFile";
        case Errc::NonFiniteValue: return "NonFiniteValue";
        case Errc::ZeroNormRow: return "ZeroNormRow";
        case Errc::IoFailure: return "IoFailure";
        case Errc::NotADistribution: return "NotADistribution";
        case Errc::MismatchedGrids: return "MismatchedGrids";
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::KTooLarge: return "KTooLarge";
        case Errc::TooFewCentroids: return "TooFewCentroids";
        case Errc::TooFewPoints: return "TooFewPoints";
        case Errc::ZeroVector: return "ZeroVector";
        case Errc::EmptySet: return "EmptySet";
        case Errc::BudgetExceedsPool: return "BudgetExceedsPool";
        case Errc::MissingScores: return "MissingScores";
        case Errc::DegenerateBatch: return "DegenerateBatch";
        case Errc::NonFinite: return "NonFinite";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::BadParams: return "BadParams";
        case Errc::NoLabeledData: return "NoLabeledData";
        case Errc::NonPositiveReference: return "NonPositiveReference";
        case Errc::MalformedCsv: return "MalformedCsv";
        case Errc::UnknownStrategy: return "UnknownStrategy";
    }
    return "Unknown";
}

/// Numeric failures (as opposed to bad input data) map to a distinct CLI exit code.
inline bool is_numeric_failure(Errc c) {
    return c == Errc::NonFinite || c == Errc::DegenerateBatch || c == Errc::ZeroVector;
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
    throw Error(code, what);
}

} // namespace cowal
