#pragma once

#include <stdexcept>
#include <string>

namespace octenh {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define OCTENH_DEFINE_ERROR(Name)                                        \
    struct Name : Error {                                                \
        explicit Name(const std::string& what = #Name) : Error(what) {}  \
    }

// image / file I/O
OCTENH_DEFINE_ERROR(BadMagic);
OCTENH_DEFINE_ERROR(TruncatedFile);
OCTENH_DEFINE_ERROR(NonFiniteData);
OCTENH_DEFINE_ERROR(IoFailure);
OCTENH_DEFINE_ERROR(AllZeroFrame);
OCTENH_DEFINE_ERROR(InvariantViolation);

// simulation
OCTENH_DEFINE_ERROR(SupportTooSmall);
OCTENH_DEFINE_ERROR(KernelTooLarge);
OCTENH_DEFINE_ERROR(EmptyReflectivity);
OCTENH_DEFINE_ERROR(SpecInvalid);

// masking
OCTENH_DEFINE_ERROR(NoSurfaceFound);
OCTENH_DEFINE_ERROR(DimMismatch);

// network / training
OCTENH_DEFINE_ERROR(DimNotDivisible);
OCTENH_DEFINE_ERROR(NonFiniteGradient);
OCTENH_DEFINE_ERROR(NonFiniteLoss);
OCTENH_DEFINE_ERROR(TooFewFrames);
OCTENH_DEFINE_ERROR(BadConfig);
OCTENH_DEFINE_ERROR(BadCheckpoint);

// metrics
OCTENH_DEFINE_ERROR(ZeroDenominator);
OCTENH_DEFINE_ERROR(ZeroBackgroundVariance);
OCTENH_DEFINE_ERROR(NoHalfCrossing);
OCTENH_DEFINE_ERROR(ColOutOfRange);
OCTENH_DEFINE_ERROR(FrameTooSmall);

#undef OCTENH_DEFINE_ERROR

} // namespace octenh
