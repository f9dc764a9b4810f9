#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cutgam {

enum class ErrorCode {
    InvalidArgument,
    NonFinite,
    DegenerateDomain,
    OutOfRange,
    DimensionMismatch,
    RankDeficient,
    NonConvergence,
    Separation,
    FamilyMismatch,
    InsufficientData,
    EmptyCategory,
    InfeasibleCuts,
    UnknownScenario,
    MissingColumn,
    ParseError,
    Io,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::NonFinite: return "non_finite";
        case ErrorCode::DegenerateDomain: return "degenerate_domain";
        case ErrorCode::OutOfRange: return "out_of_range";
        case ErrorCode::DimensionMismatch: return "dimension_mismatch";
        case ErrorCode::RankDeficient: return "rank_deficient";
        case ErrorCode::NonConvergence: return "non_convergence";
        case ErrorCode::Separation: return "separation";
        case ErrorCode::FamilyMismatch: return "family_mismatch";
        case ErrorCode::InsufficientData: return "insufficient_data";
        case ErrorCode::EmptyCategory: return "empty_category";
        case ErrorCode::InfeasibleCuts: return "infeasible_cuts";
        case ErrorCode::UnknownScenario: return "unknown_scenario";
        case ErrorCode::MissingColumn: return "missing_column";
        case ErrorCode::ParseError: return "parse_error";
        case ErrorCode::Io: return "io";
    }
    return "unknown";
}

/// Library error carrying a machine-readable code next to the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace cutgam
