// SPDX-License-Identifier: Apache-2.0
// Exception types shared by all cigdetect modules.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cigdetect {

/** Base class of every error raised by the library. */
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/** A value violates its type invariants (degenerate box, bad confidence...). */
class ValidationError : public Error {
public:
    using Error::Error;
};

/** Clipping left a zero-area box; the proposal must be discarded. */
class EmptyIntersection : public Error {
public:
    using Error::Error;
};

/** Malformed input text. `line` is 1-based, 0 when not applicable. */
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& detail)
        : Error(line == 0 ? detail : "line " + std::to_string(line) + ": " + detail)
        , line_(line)
    {
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/** Image file could not be read or decoded. */
class DecodeError : public Error {
public:
    using Error::Error;
};

/** An inference backend could not answer a query. */
class BackendFailure : public Error {
public:
    using Error::Error;
};

/** Invalid runtime configuration (flags, config file, backend selection). */
class ConfigError : public Error {
public:
    using Error::Error;
};

/** Manifest label outside the recognised vocabulary. */
class UnknownLabel : public Error {
public:
    using Error::Error;
};

/** A pipeline result has no ground-truth entry. */
class MissingTruth : public Error {
public:
    explicit MissingTruth(const std::string& image_id)
        : Error("no ground truth for image '" + image_id + "'")
        , image_id_(image_id)
    {
    }

    const std::string& image_id() const noexcept { return image_id_; }

private:
    std::string image_id_;
};

} // namespace cigdetect
