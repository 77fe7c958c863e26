#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace modnet {

// Dense row-major N-d value buffer with an optional gradient buffer of the
// same length. The single value currency of the engine: feature maps are
// stored H x W x C, weights in layer-specific layouts documented at the
// kernels.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until ensure_grad()

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s);
  Tensor(std::vector<size_t> s, std::vector<double> v);

  static size_t count(const std::vector<size_t>& s);

  size_t numel() const { return values.size(); }
  bool has_grad() const { return grad.size() == values.size(); }
  void ensure_grad();
  void zero_grad();
  bool finite() const;
};

std::string shape_str(const std::vector<size_t>& s);

}  // namespace modnet
