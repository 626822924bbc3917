#pragma once

#include <stdexcept>

namespace grace {

// Malformed or inconsistent input data: files, spans, ids, config values.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A cosine or normalization met a zero-norm vector under ZeroVectorPolicy::error.
class ZeroVectorError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace grace
