#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace sflsim {

/// Dense double-precision array with a shape. The universal value type of
/// the learning core; gradients ride along as an optional flat array.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> values;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  Tensor(std::vector<size_t> s, std::vector<double> v);
  static Tensor zeros(std::vector<size_t> s);
  static Tensor vec(std::vector<double> v);

  size_t size() const { return values.size(); }
  size_t rank() const { return shape.size(); }
  double& at(size_t i) { return values[i]; }
  double at(size_t i) const { return values[i]; }

  /// Throws if length(values) != product(shape) or grad length mismatches.
  void check_invariants() const;
};

size_t shape_product(const std::vector<size_t>& shape);
std::string shape_str(const std::vector<size_t>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

/// Throws std::runtime_error naming `what` if any entry is NaN or Inf.
void assert_finite(const std::vector<double>& v, const std::string& what);
void assert_finite(const Tensor& t, const std::string& what);

}  // namespace sflsim
