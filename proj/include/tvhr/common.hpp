#ifndef TVHR_COMMON_HPP
#define TVHR_COMMON_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace tvhr {

inline constexpr const char* version_string = "0.1.0";

// Input/structure problems: bad files, broken invariants, unusable networks.
// The CLI maps these to exit code 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical estimation failures: non-convergence, singular information,
// degenerate likelihoods, sampler faults. Exit code 2.
struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Misuse of diagnostic routines (single chain, constant draws, ...).
struct DiagnosticsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Severity { info, warning, fatal };

struct Finding {
    Severity severity = Severity::info;
    std::string code;     // stable machine-readable tag, e.g. "disconnected"
    std::string message;  // human-readable, with study/arm context
};

inline const char* severity_name(Severity s) {
    switch (s) {
        case Severity::info: return "info";
        case Severity::warning: return "warning";
        case Severity::fatal: return "fatal";
    }
    return "?";
}

inline bool any_fatal(const std::vector<Finding>& fs) {
    for (const auto& f : fs)
        if (f.severity == Severity::fatal) return true;
    return false;
}

}  // namespace tvhr

#endif
