#pragma once

#include <stdexcept>
#include <string>

namespace grt {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateRay : Error { using Error::Error; };
struct InvalidView : Error { using Error::Error; };
struct InvalidCoord : Error { using Error::Error; };
struct StaleBvh : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct StateMismatch : Error { using Error::Error; };
struct NegativeData : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct OutOfGrid : Error { using Error::Error; };
struct RoiOutOfGrid : Error { using Error::Error; };
struct ZeroBackground : Error { using Error::Error; };
struct NoPeak : Error { using Error::Error; };
struct AmbiguousPeak : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

} // namespace grt
