#ifndef VPFB_ERROR_HPP
#define VPFB_ERROR_HPP

#include <stdexcept>
#include <string>

namespace vpfb {

/// Invalid hyperparameters, bad config keys, shape mismatches at API boundaries.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite intermediate values, solver underflow, diverging chains.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-system failures. The message always carries the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ConfigError(what);
}

}  // namespace detail
}  // namespace vpfb

#endif  // VPFB_ERROR_HPP
