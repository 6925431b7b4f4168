#pragma once

#include <stdexcept>
#include <string>

namespace dids {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad JSON, bad record, bad fact text. Carries a location
/// prefix such as "signatures.json: record 3".
class ParseError : public Error {
public:
    using Error::Error;
};

/// Attack graph is internally inconsistent (arity clash, unbound variables).
class MalformedGraph : public ParseError {
public:
    using ParseError::ParseError;
};

/// A configuration value outside its documented range.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An operation was invoked in a state its contract forbids.
class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace dids
