#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowprune {

using Shape = std::vector<std::size_t>;

/// Raised when shapes, layer wiring or mask congruence are inconsistent.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation's domain is empty or ill-posed.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on overflow, NaN or division by a vanishing variance.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a verifier is asked to handle a layer it has no theory for.
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0)
      : shape(std::move(s)), data(element_count(shape), fill) {}
  Tensor(Shape s, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  std::span<double> values() { return data; }
  std::span<const double> values() const { return data; }

  /// Leading dimension (the batch axis for activations).
  std::size_t rows() const { return shape.empty() ? 0 : shape.front(); }
  /// Elements per leading-axis slice.
  std::size_t row_size() const { return rows() == 0 ? 0 : data.size() / rows(); }

  bool operator==(const Tensor&) const = default;
};

bool all_finite(std::span<const double> values);
double dot(std::span<const double> a, std::span<const double> b);
double max_abs(std::span<const double> values);

}  // namespace flowprune
