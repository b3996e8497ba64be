#pragma once

#include <stdexcept>
#include <string>

namespace sfde {

struct DivergentMomentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonGeneratorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ReducibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FastPathUnavailableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Trajectory magnitude exceeded the guard threshold; stands in for a
/// genuine solution blow-up at runtime.
struct BlowUpError : std::runtime_error {
    double time = 0.0;
    double magnitude = 0.0;
    long sample = -1;      // filled in by ensemble drivers when known
    double param = 0.0;    // study parameter (k or dt) when known

    BlowUpError(const std::string& msg, double t, double mag)
        : std::runtime_error(msg), time(t), magnitude(mag) {}
};

struct NonDyadicError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateFitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnknownModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when an internal cross-check (e.g. fast vs. naive aggregation)
/// disagrees beyond tolerance.
struct InternalConsistencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace sfde
