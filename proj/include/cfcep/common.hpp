#pragma once

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cfcep {

using cplx = std::complex<double>;
using Rng = std::mt19937_64;

/// Base of every error raised by the library. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Ill-conditioned fits, unstable recursions, diverging training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed or incompatible model / dataset file.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A predictor was asked for output before enough estimate history exists.
class WarmupError : public Error {
 public:
  using Error::Error;
};

/// Normalized Doppler outside the range covered by the model bank.
class UnsupportedMobilityError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Deterministically derives an independent stream seed from a master seed and
/// a path of stream identifiers (splitmix64 chaining).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

/// Circularly symmetric complex Gaussian sample CN(0, variance).
inline cplx complex_gaussian(Rng& rng, double variance) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double s = std::sqrt(variance / 2.0);
  const double re = n(rng);
  const double im = n(rng);
  return {s * re, s * im};
}

/// 64-bit FNV-1a over a byte string, rendered as 16 hex digits.
std::string fingerprint(const std::string& text);

}  // namespace cfcep
