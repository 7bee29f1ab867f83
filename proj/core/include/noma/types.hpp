#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace noma {

using cplx = std::complex<double>;

// One bit per element, values 0 or 1.
using Bits = std::vector<std::uint8_t>;

// Soft bits, positive means bit 0 is more likely. NaN is never a valid entry.
using LlrVector = std::vector<double>;

// Caller broke a documented precondition (length mismatch, bad index, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A configuration cannot be realized (unsupported scheme size, bad key, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace noma
