#pragma once

#include <stdexcept>
#include <string>

namespace rsvp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller passed a value outside the operation's domain.
class InvalidInput : public Error {
public:
    using Error::Error;
};

// A precondition that upstream code guarantees did not hold.
class ContractViolation : public Error {
public:
    using Error::Error;
};

// Serialized data (RLE counts, manifests, PNG bytes) is malformed.
class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigurationError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    using Error::Error;
};

// Retryable failure: connection refused, timeout, 5xx, 429.
class TransientBackendError : public BackendError {
public:
    using BackendError::BackendError;
};

class BackendUnavailable : public BackendError {
public:
    using BackendError::BackendError;
};

// The remote answered, but not in the agreed wire format.
class ProtocolError : public BackendError {
public:
    using BackendError::BackendError;
};

class CorpusError : public Error {
public:
    using Error::Error;
};

}  // namespace rsvp
