#include "modnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "modnet/error.hpp"

namespace modnet {

size_t Tensor::count(const std::vector<size_t>& s) {
  size_t n = 1;
  for (size_t e : s) n *= e;
  return s.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<size_t> s) : shape(std::move(s)), values(count(shape), 0.0) {
  for (size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
}

Tensor::Tensor(std::vector<size_t> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (count(shape) != values.size()) {
    throw ShapeError("value buffer length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
}

void Tensor::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

bool Tensor::finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_str(const std::vector<size_t>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

}  // namespace modnet
