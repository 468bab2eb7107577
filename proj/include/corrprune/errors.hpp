#pragma once

#include <stdexcept>
#include <string>

namespace corrprune {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Geometry
struct DegenerateDenominatorError : Error { using Error::Error; };
struct RankDeficiencyError : Error { using Error::Error; };
struct InsufficientSupportError : Error { using Error::Error; };
struct CheiralityTieError : Error { using Error::Error; };

// Network / training
struct ShapeMismatchError : Error { using Error::Error; };
struct UnknownVariantError : Error { using Error::Error; };
struct EmptyResultError : Error { using Error::Error; };
struct LengthMismatchError : Error { using Error::Error; };
struct EigengapCollapseError : Error { using Error::Error; };

// Synthetic data
struct VisibilityFailureError : Error { using Error::Error; };
struct FrustumEmptyError : Error { using Error::Error; };

// Configuration and file formats
struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct BadMagicError : Error { using Error::Error; };
struct VersionMismatchError : Error { using Error::Error; };
struct TruncationError : Error { using Error::Error; };

}  // namespace corrprune
