#pragma once

#include <stdexcept>
#include <string>

namespace vsnmpc {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Polygon area at or below the degeneracy threshold.
class DegenerateArea : public Error {
 public:
  using Error::Error;
};

// Reference-angle denominator at or below the singularity threshold.
class AngleSingularity : public Error {
 public:
  using Error::Error;
};

class StepDegeneracy : public Error {
 public:
  using Error::Error;
};

class BarrierBlowup : public Error {
 public:
  using Error::Error;
};

class InputAtLimit : public Error {
 public:
  using Error::Error;
};

// A predicted trajectory left the barrier-safe set (or degenerated) at `step()`.
class InfeasibleRollout : public Error {
 public:
  InfeasibleRollout(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

class InfeasibleStart : public Error {
 public:
  using Error::Error;
};

class TargetLost : public Error {
 public:
  using Error::Error;
};

class DegenerateTarget : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShortRun : public Error {
 public:
  using Error::Error;
};

}  // namespace vsnmpc
