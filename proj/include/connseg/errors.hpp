#pragma once

#include <stdexcept>
#include <string>

namespace connseg {

// Maps to CLI exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable/malformed files, shape mismatches in user data. Exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numerical or consistency check failed. Exit code 3.
struct VerifyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace connseg
