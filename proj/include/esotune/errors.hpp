#pragma once

#include <stdexcept>
#include <string>

namespace esotune {

/// Invalid or incomplete user configuration. `path` names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::invalid_argument(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Closed-loop state left the finite range during integration.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(double time)
      : std::runtime_error("closed loop diverged at t = " + std::to_string(time) + " s"), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// NaN/Inf encountered in a numerical routine other than the simulator.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  IoError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace esotune
