#pragma once

#include <stdexcept>
#include <string>

namespace rcpred {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row/column counts disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Values outside their domain (non-binary treatment, NaN/inf entries).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied argument is unusable (bad fold count, mismatched predict
// input, unclipped propensity).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Too few rows of the required kind (e.g. fewer than 2 treated rows in a fold).
class InsufficientData : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (DGP parameters, experiment config files).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A numerical routine produced non-finite results.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rcpred
