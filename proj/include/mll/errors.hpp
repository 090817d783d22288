#pragma once

#include <stdexcept>

namespace mll {

// Base type for all library failures. Concrete types below are named after
// the contract they enforce so call sites can catch them selectively.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ZeroRowError : Error { using Error::Error; };
struct DimensionMismatchError : Error { using Error::Error; };
struct NonFiniteInputError : Error { using Error::Error; };
struct InvalidFamilyError : Error { using Error::Error; };
struct InvalidSpecError : Error { using Error::Error; };
struct NegativeSigmaError : Error { using Error::Error; };
struct LengthMismatchError : Error { using Error::Error; };
struct IndexOutOfRangeError : Error { using Error::Error; };
struct DegenerateFoldError : Error { using Error::Error; };
struct EmptyGalleryError : Error { using Error::Error; };
struct RequiresTwoDError : Error { using Error::Error; };
struct RejectionFailureError : Error { using Error::Error; };
struct DivergenceError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

} // namespace mll
