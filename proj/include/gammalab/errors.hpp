#ifndef GAMMALAB_ERRORS_HPP
#define GAMMALAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace gammalab {

// Thrown when a mollification scale cannot be resolved on the working grid.
class resolution_error : public std::runtime_error {
public:
  explicit resolution_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an iterative method exhausts its budget before converging.
class iteration_error : public std::runtime_error {
public:
  iteration_error(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

private:
  double residual_;
};

// Thrown on malformed experiment configurations.
class config_error : public std::invalid_argument {
public:
  explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace gammalab

#endif
