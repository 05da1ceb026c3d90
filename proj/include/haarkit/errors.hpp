#pragma once

#include <stdexcept>
#include <string>

namespace haarkit {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-facing input: paths, config ranges, malformed data files.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Contract violations on in-memory data (out-of-bounds rects, shape mismatches).
class DataError : public Error {
public:
    using Error::Error;
};

enum class PgmErrorKind {
    BadMagic,
    BadHeader,
    BadMaxval,
    Truncated,
    Io,
};

class PgmError : public Error {
public:
    PgmError(PgmErrorKind kind, const std::string& msg) : Error(msg), kind_(kind) {}
    PgmErrorKind kind() const { return kind_; }

private:
    PgmErrorKind kind_;
};

enum class CascadeIoErrorKind {
    VersionMismatch,
    MalformedField,
    InvariantViolation,
    Io,
};

class CascadeIoError : public Error {
public:
    CascadeIoError(CascadeIoErrorKind kind, const std::string& msg) : Error(msg), kind_(kind) {}
    CascadeIoErrorKind kind() const { return kind_; }

private:
    CascadeIoErrorKind kind_;
};

// Training could not proceed: degenerate sample sets, no stump better than
// chance, stage targets unattainable at the stump cap.
class TrainError : public Error {
public:
    using Error::Error;
};

}  // namespace haarkit
