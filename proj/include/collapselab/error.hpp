#pragma once

#include <stdexcept>
#include <string>

namespace collapselab {

// Base for every error the library raises. Callers that only care about
// "something numeric went wrong" can catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidMatrix : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class SingularMatrix : public Error {
public:
    using Error::Error;
};

class InvalidCovariance : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class NeedsNegatives : public Error {
public:
    using Error::Error;
};

class UnsupportedInfiniteKappa : public Error {
public:
    using Error::Error;
};

class SingularSigma : public Error {
public:
    using Error::Error;
};

class EmptyMask : public Error {
public:
    using Error::Error;
};

class NotConverged : public Error {
public:
    using Error::Error;
};

class EmptyGrid : public Error {
public:
    using Error::Error;
};

} // namespace collapselab
