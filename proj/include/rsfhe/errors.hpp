#pragma once

#include <stdexcept>
#include <string>

namespace rsfhe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A multiplication was attempted on a ciphertext with no remaining level.
class DepthExhausted : public Error {
 public:
  using Error::Error;
};

/// Slot layout does not fit into the ciphertext.
class LayoutError : public Error {
 public:
  using Error::Error;
};

class InvalidMargin : public Error {
 public:
  using Error::Error;
};

class NoFeasibleDegree : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class AlreadyNormalized : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public Error {
 public:
  using Error::Error;
};

/// The decrypted result is not one-hot: more than one nonzero slot.
class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters, malformed files or configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace rsfhe
