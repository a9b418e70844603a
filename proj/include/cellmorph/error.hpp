#pragma once

#include <stdexcept>
#include <string>

namespace cellmorph {

// Base class for every error raised by the library. The stage tag names the
// pipeline stage ("imageio", "denoise", ...) so front ends can report it.
class Error : public std::runtime_error {
public:
    Error(std::string stage, const std::string& message)
        : std::runtime_error(message), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

// Input could not be located or opened at all.
class InputError : public Error {
public:
    using Error::Error;
};

// Input exists but its content violates a format or dimension contract.
class FormatError : public Error {
public:
    using Error::Error;
};

// Failure inside an algorithm (e.g. unmeasurable geometry, crowded field).
class ProcessingError : public Error {
public:
    using Error::Error;
};

}  // namespace cellmorph
