#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hpl {

enum class Errc {
    rejection_limit_exceeded,
    bracket_not_found,
    near_singular_denominator,
    grid_mismatch,
    bad_magic,
    version_mismatch,
    shape_mismatch,
    non_finite_weight,
    invalid_normalization,
    length_mismatch,
    history_underflow,
    norm_too_large,
    not_hurwitz,
    degenerate_trace,
    truncated_input,
    io_error,
    config_error,
    invalid_argument,
};

[[nodiscard]] constexpr std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::rejection_limit_exceeded: return "RejectionLimitExceeded";
        case Errc::bracket_not_found: return "BracketNotFound";
        case Errc::near_singular_denominator: return "NearSingularDenominator";
        case Errc::grid_mismatch: return "GridMismatch";
        case Errc::bad_magic: return "BadMagic";
        case Errc::version_mismatch: return "VersionMismatch";
        case Errc::shape_mismatch: return "ShapeMismatch";
        case Errc::non_finite_weight: return "NonFiniteWeight";
        case Errc::invalid_normalization: return "InvalidNormalization";
        case Errc::length_mismatch: return "LengthMismatch";
        case Errc::history_underflow: return "HistoryUnderflow";
        case Errc::norm_too_large: return "NormTooLarge";
        case Errc::not_hurwitz: return "NotHurwitz";
        case Errc::degenerate_trace: return "DegenerateTrace";
        case Errc::truncated_input: return "TruncatedInput";
        case Errc::io_error: return "IoError";
        case Errc::config_error: return "ConfigError";
        case Errc::invalid_argument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Library exception. Every failure raised by hpl carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace hpl
