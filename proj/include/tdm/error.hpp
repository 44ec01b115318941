#pragma once

#include <stdexcept>
#include <string>

namespace tdm {

// Exit codes of the command-line tool map one-to-one onto these.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input data: unreadable files, ragged rows, shape mismatches.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite losses, gradients or transform outputs.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tdm
