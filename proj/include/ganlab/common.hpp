#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ganlab {

#ifdef GANLAB_REAL64
using real_t = double;
#else
using real_t = float;
#endif

// Dimension list of a dense row-major tensor. Extents are positive.
using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes do not conform to an operation's shape algebra.
struct ShapeError : Error {
    using Error::Error;
};

// A public result contained NaN/Inf, or a numeric contract was violated.
struct NumericError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Unknown attribute / vocabulary lookups.
struct DataError : Error {
    using Error::Error;
};

// Negative slope shared by every leaky ReLU in the models.
inline constexpr real_t kLeakySlope = static_cast<real_t>(0.2);

// Lower clamp applied by the log primitive so adversarial losses stay finite.
inline constexpr real_t kLogClamp = static_cast<real_t>(1e-12);

inline constexpr real_t kBatchNormEps = static_cast<real_t>(1e-5);
inline constexpr real_t kBatchNormMomentum = static_cast<real_t>(0.1);

}  // namespace ganlab
