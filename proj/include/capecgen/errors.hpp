#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace capecgen {

// Process exit codes shared by every CLI subcommand.
enum class ExitCode : int {
    Ok = 0,
    InputError = 2,
    ServiceError = 3,
    Refusal = 4,
    InternalError = 5,
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept { return ExitCode::InternalError; }
};

// Bad user input: unreadable files, malformed documents, invalid config.
class InputError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::InputError; }
};

class XmlError : public InputError {
public:
    XmlError(const std::string& what, std::size_t offset)
        : InputError(what + " at byte " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Remote endpoint failed (unreachable, timed out, 429/5xx after retries).
class TransportError : public Error {
public:
    TransportError(const std::string& what, int attempts, std::optional<int> status = std::nullopt,
                   std::optional<double> retry_after_s = std::nullopt)
        : Error(what), attempts_(attempts), status_(status), retry_after_s_(retry_after_s) {}
    ExitCode exit_code() const noexcept override { return ExitCode::ServiceError; }
    int attempts() const noexcept { return attempts_; }
    std::optional<int> status() const noexcept { return status_; }
    std::optional<double> retry_after_s() const noexcept { return retry_after_s_; }

private:
    int attempts_;
    std::optional<int> status_;
    std::optional<double> retry_after_s_;
};

// Remote endpoint answered, but not per the agreed wire format.
class ProtocolError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::ServiceError; }
};

// Missing or rejected credentials. Never retried.
class CredentialError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::ServiceError; }
};

// Model reply did not contain a JSON object at all.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

// Model reply contained an object that violates the payload schema.
class SchemaError : public Error {
public:
    SchemaError(const std::string& what, std::string key) : Error(what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

// Existing on-disk state disagrees with the requested run.
class RefusalError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::Refusal; }
};

// A host tool needed for checking is missing (distinct from a failing snippet).
class EnvironmentError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::InputError; }
};

}  // namespace capecgen
