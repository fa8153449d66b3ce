#pragma once

#include <stdexcept>
#include <string>

namespace imgcred {

// Malformed or inconsistent input data (manifests, corpora, images, configs).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or numerically undefined states during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated preconditions on shapes and arguments.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace imgcred
