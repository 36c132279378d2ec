#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rjr {

/// Base error for every precondition or input failure raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration problem tied to a specific key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error("config key '" + key + "': " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

namespace units {
/// Boltzmann constant in meV/K.
inline constexpr double kB_meV_per_K = 0.08617333262;
inline constexpr double ueV_to_meV = 1e-3;

inline double beta_from_mK(double T_mK) { return 1.0 / (kB_meV_per_K * T_mK * 1e-3); }
inline double kT_from_mK(double T_mK) { return kB_meV_per_K * T_mK * 1e-3; }
}  // namespace units

/// Inverse temperature in 1/meV. Infinity is the T = 0 sentinel.
struct InverseTemperature {
  double value = std::numeric_limits<double>::infinity();

  static InverseTemperature zero_temperature() { return {}; }
  static InverseTemperature from_beta(double beta) {
    if (!(beta > 0.0)) throw Error("inverse temperature must be positive");
    return {beta};
  }
  static InverseTemperature from_mK(double T_mK) {
    if (!(T_mK > 0.0)) throw Error("temperature must be positive");
    return {units::beta_from_mK(T_mK)};
  }
  bool is_zero_temperature() const { return std::isinf(value); }
};

/// Fermi-Dirac occupation 1/(1+exp(beta*E)), overflow safe; step function at T = 0.
inline double fermi(double E, double beta) {
  if (std::isinf(beta)) return E < 0.0 ? 1.0 : (E > 0.0 ? 0.0 : 0.5);
  const double x = beta * E;
  if (x > 0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

}  // namespace rjr
