#pragma once

#include <stdexcept>
#include <string>

namespace asdsev {

// Error categories map onto CLI exit codes: validation -> 1,
// training -> 2, I/O -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct TrainingError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace asdsev
