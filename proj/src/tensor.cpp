#include "sflsim/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sflsim {

Tensor::Tensor(std::vector<size_t> s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)) {
  check_invariants();
}

Tensor Tensor::zeros(std::vector<size_t> s) {
  size_t n = shape_product(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::vec(std::vector<double> v) {
  std::vector<size_t> s{v.size()};
  return Tensor(std::move(s), std::move(v));
}

void Tensor::check_invariants() const {
  if (values.size() != shape_product(shape)) {
    std::ostringstream os;
    os << "tensor invariant violated: " << values.size() << " values for shape "
       << shape_str(shape);
    throw std::invalid_argument(os.str());
  }
  if (grad && grad->size() != values.size()) {
    throw std::invalid_argument("tensor invariant violated: grad length != values length");
  }
}

size_t shape_product(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const std::vector<size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

void assert_finite(const std::vector<double>& v, const std::string& what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error("non-finite value in " + what);
    }
  }
}

void assert_finite(const Tensor& t, const std::string& what) { assert_finite(t.values, what); }

}  // namespace sflsim
