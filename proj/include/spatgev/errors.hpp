// errors.hpp
// Error types shared across the library. Each error carries a category
// string used by the CLI for machine-parsable reporting and exit codes.

#ifndef SPATGEV_ERRORS_HPP
#define SPATGEV_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace spatgev {

class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& msg)
      : std::runtime_error(msg), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

// Invalid inputs: bad parameter values, dimension mismatches, malformed files.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error("validation", msg) {}
};

// Numerical failures: singular covariances, indefinite Hessians,
// non-convergence.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error("numeric", msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};

}  // namespace spatgev

#endif  // SPATGEV_ERRORS_HPP
