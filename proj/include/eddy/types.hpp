#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace eddy {

using Complex = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;

inline constexpr Complex I{0.0, 1.0};

/// Unconjugated product of complex 3-vectors (Eigen's dot() conjugates the
/// first factor, which is almost never what the impedance formulas want).
inline Complex cdot(const CVec3& a, const CVec3& b) {
  return a(0) * b(0) + a(1) * b(1) + a(2) * b(2);
}

/// Base class for all library failures. Subtypes carry the failure category
/// so callers (notably the CLI) can map them to exit codes.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class GeometryError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, long line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

private:
  long line_;
};

class ContractError : public Error {
public:
  using Error::Error;
};

class SourceConformityError : public Error {
public:
  using Error::Error;
};

class ParameterBoundError : public Error {
public:
  using Error::Error;
};

class AssemblyError : public Error {
public:
  using Error::Error;
};

class SingularSystemError : public Error {
public:
  SingularSystemError(const std::string& what, long pivot)
      : Error(what + " (first failing pivot " + std::to_string(pivot) + ")"),
        pivot_(pivot) {}
  long pivot() const { return pivot_; }

private:
  long pivot_ = -1;
};

class NumericalError : public Error {
public:
  using Error::Error;
};

class InputError : public Error {
public:
  using Error::Error;
};

/// FNV-1a, used for provenance hashes of meshes, configs and parameter tables.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename T>
std::uint64_t fnv1a_range(const T* data, std::size_t count, std::uint64_t seed) {
  return fnv1a(static_cast<const void*>(data), count * sizeof(T), seed);
}

}  // namespace eddy
