#pragma once

#include <stdexcept>
#include <string>

namespace ilam {

/// Base class of all errors thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct InvalidInput : Error {
  using Error::Error;
};
struct InvalidParam : Error {
  using Error::Error;
};
struct NoReturn : Error {
  using Error::Error;
};
struct DegenerateConfiguration : Error {
  using Error::Error;
};
struct InsufficientMatches : Error {
  using Error::Error;
};
struct NoConvergence : Error {
  using Error::Error;
};
struct NoGround : Error {
  using Error::Error;
};
struct DegeneratePlane : Error {
  using Error::Error;
};
struct InsufficientCorpus : Error {
  using Error::Error;
};
struct DisconnectedGraph : Error {
  using Error::Error;
};
struct NotPositiveDefinite : Error {
  using Error::Error;
};
struct NoAssociations : Error {
  using Error::Error;
};

}  // namespace ilam
