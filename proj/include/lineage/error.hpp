#pragma once

#include <stdexcept>
#include <string>

namespace lineage {

// Base class for everything the library throws on bad input or inapplicable methods.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input: files, configs, out-of-range arguments.
class InputError : public Error {
 public:
  using Error::Error;
};

// The requested estimator is not defined for these inputs (e.g. kappa with k_q > 0).
class NotApplicableError : public Error {
 public:
  using Error::Error;
};

// Simulation could not produce a usable result (resource caps, conditioning acceptance).
class SimulationError : public Error {
 public:
  using Error::Error;
};

}  // namespace lineage
