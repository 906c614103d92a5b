#pragma once

#include <stdexcept>
#include <string>

namespace moca {

// Every failure the library reports derives from Error so callers can catch
// one type at the boundary (the CLI maps these onto exit codes).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A vector whose norm is too small to define a direction.
class DegenerateVector : public Error {
public:
    using Error::Error;
};

// VT: the class-conditional deviation of the sampled new example vanished.
class DegenerateDeviation : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

// backward() was given a cache that does not belong to the parameters.
class StaleCache : public Error {
public:
    using Error::Error;
};

class NumericalOverflow : public Error {
public:
    using Error::Error;
};

// Invalid or inapplicable configuration (e.g. WAP in the proxy setting).
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// A file parsed but does not carry the expected schema/version.
class SchemaMismatch : public Error {
public:
    using Error::Error;
};

class LabelOutOfRange : public Error {
public:
    using Error::Error;
};

}  // namespace moca
