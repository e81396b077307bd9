#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace stowave {

// Error taxonomy; the CLI maps these to distinct exit codes.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BlowupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DesignError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Quintic smoothstep: S(0)=0, S(1)=1, S'=S''=0 at both ends, monotone.
inline double smoothstep5(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

inline double smoothstep5_d(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    return 30.0 * t * t * (1.0 - t) * (1.0 - t);
}

inline bool is_pow2(long v) { return v > 0 && (v & (v - 1)) == 0; }

inline double sq(double v) { return v * v; }

} // namespace stowave
