#pragma once

#include <stdexcept>
#include <string>

namespace dendron {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or layer dimensions that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Task graph / dependency matrix integrity problems.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Non-finite values reached a loss, gradient or parameter.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input files: CSV datasets, configs, model files.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace dendron
