#pragma once

#include <stdexcept>
#include <string>

namespace kronest {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dimension mismatch between a matrix and the Kronecker shape it is used with.
class ShapeError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

// Gram matrix of a factor is (numerically) singular: the factorization collapsed.
class NearSingularGram : public Error {
public:
    using Error::Error;
};

// Initial estimate is zero or rank deficient, so no valid starting factors exist.
class DegenerateInit : public Error {
public:
    using Error::Error;
};

class InfeasibleProblem : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

} // namespace kronest
