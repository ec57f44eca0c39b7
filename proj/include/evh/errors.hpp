#ifndef EVH_ERRORS_HPP
#define EVH_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace evh {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input bytes are not a PE this parser accepts.
struct MalformedPe : Error {
    explicit MalformedPe(const std::string& reason) : Error("malformed PE: " + reason) {}
};

// Section extents cannot be placed without overlap, or the section table has
// no room to grow.
struct LayoutConflict : Error {
    explicit LayoutConflict(const std::string& reason) : Error("layout conflict: " + reason) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& reason) : Error("shape mismatch: " + reason) {}
};

struct DivergedLoss : Error {
    explicit DivergedLoss(const std::string& reason) : Error("diverged loss: " + reason) {}
};

struct LengthMismatch : Error {
    explicit LengthMismatch(const std::string& reason) : Error("length mismatch: " + reason) {}
};

struct OverlapDetected : Error {
    explicit OverlapDetected(const std::string& reason) : Error("split overlap: " + reason) {}
};

struct InsufficientSamples : Error {
    explicit InsufficientSamples(const std::string& reason) : Error("insufficient samples: " + reason) {}
};

// Raised by the adversarial cycle when no training malware is detected any
// more; callers treat it as successful termination of the loop.
struct NoDetectedMalware : Error {
    NoDetectedMalware() : Error("no detected malware left to evolve") {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& reason) : Error("config: " + reason) {}
};

} // namespace evh

#endif
