#pragma once

#include <stdexcept>
#include <string>

namespace shapegem {

// Base class for all library errors. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

// Volume/model files: bad header, payload size mismatch, non-finite values.
class FormatError : public Error {
public:
    using Error::Error;
};

class TooManyLevels : public Error {
public:
    using Error::Error;
};

// A mixture component lost essentially all of its responsibility mass
// during EM; the requested K is too large for the data.
class DegenerateComponent : public Error {
public:
    using Error::Error;
};

class NonFiniteLoss : public Error {
public:
    using Error::Error;
};

// Normal estimation hit a neighborhood whose covariance has rank < 2.
class DegenerateNeighborhood : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NonWatertight : public Error {
public:
    using Error::Error;
};

class LevelMismatch : public Error {
public:
    using Error::Error;
};

} // namespace shapegem
