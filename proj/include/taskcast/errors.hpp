#pragma once

#include <stdexcept>
#include <string>

namespace taskcast {

// Dimension disagreement between tensors or between a tensor and a config.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the domain of an operation (bad bin, bad target, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// File system or format failure. The message always names the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace taskcast
