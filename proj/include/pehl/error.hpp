#pragma once

#include <stdexcept>
#include <string>

namespace pehl {

// Base of every error the library throws. The CLI maps each subclass onto a
// process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data: malformed manifests, single-class training sets, empty
// splits, dimension mismatches.
class DataError : public Error {
 public:
  using Error::Error;
};

// A training run produced a non-finite loss or objective.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// A model artifact failed its magic/version/length/checksum checks.
class ArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace pehl
