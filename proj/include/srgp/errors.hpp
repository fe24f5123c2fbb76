#ifndef INCLUDE_SRGP_ERRORS_HPP_
#define INCLUDE_SRGP_ERRORS_HPP_

#include <sstream>
#include <stdexcept>
#include <string>

namespace srgp {

// Violated precondition on shapes, indices or parameter ranges.
class ContractViolation : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or non-finite input data.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Factorization failed, or a computation produced non-finite values.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A matrix could not be Cholesky factorized even after jitter escalation.
class IllConditionedError : public NumericalError {
public:
  IllConditionedError(const std::string &matrix_name, double max_jitter)
      : NumericalError("ill-conditioned matrix '" + matrix_name +
                       "': Cholesky failed with jitter up to " +
                       std::to_string(max_jitter)),
        matrix_(matrix_name) {}

  const std::string &matrix_name() const { return matrix_; }

private:
  std::string matrix_;
};

namespace details {

template <typename... Args> inline std::string concat(const Args &...args) {
  std::ostringstream oss;
  (oss << ... << args);
  return oss.str();
}

} // namespace details

#define SRGP_REQUIRE(cond, ...)                                                \
  do {                                                                         \
    if (!(cond)) {                                                             \
      throw ::srgp::ContractViolation(::srgp::details::concat(__VA_ARGS__));   \
    }                                                                          \
  } while (0)

} // namespace srgp

#endif
