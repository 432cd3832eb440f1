#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace trialign {

// All library failures derive from Error so callers can catch one type.
// The CLI maps every Error to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

// A required field is missing or has the wrong type. what() names the field.
class SchemaError : public Error {
public:
    using Error::Error;
};

class InvariantError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ExtractionError : public Error {
public:
    ExtractionError(std::string feature_id, const std::string& reason)
        : Error("cannot extract feature '" + feature_id + "': " + reason),
          feature_id_(std::move(feature_id)) {}

    const std::string& feature_id() const noexcept { return feature_id_; }

private:
    std::string feature_id_;
};

class CoverageError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ClockError : public Error {
public:
    using Error::Error;
};

class JoinError : public Error {
public:
    using Error::Error;
};

class InfeasibleError : public Error {
public:
    using Error::Error;
};

class DegenerateInputError : public Error {
public:
    using Error::Error;
};

class CredentialError : public Error {
public:
    using Error::Error;
};

class TruncationError : public CredentialError {
public:
    using CredentialError::CredentialError;
};

class VersionError : public CredentialError {
public:
    using CredentialError::CredentialError;
};

// The recomputed digest does not match the stored one; the record was altered.
class DigestMismatchError : public CredentialError {
public:
    using CredentialError::CredentialError;
};

class EncodingError : public CredentialError {
public:
    using CredentialError::CredentialError;
};

}  // namespace trialign
