#pragma once

#include <stdexcept>
#include <string>

namespace fdsyn {

// Bad arguments, dimension mismatches, malformed files.
struct InputError : std::invalid_argument {
    explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// Singularities or poles hit while evaluating at a frequency.
struct EvaluationError : std::runtime_error {
    explicit EvaluationError(const std::string& what) : std::runtime_error(what) {}
};

// Rank-deficient input spectrum during frequency-response estimation.
struct IdentificationError : std::runtime_error {
    explicit IdentificationError(const std::string& what) : std::runtime_error(what) {}
};

// Synthesis could not produce a controller (initialization or feasibility).
struct SynthesisError : std::runtime_error {
    explicit SynthesisError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fdsyn
