#include "bgr/tensor.hpp"

#include <cmath>

namespace bgr {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (data.size() != shape_product(shape))
    throw std::runtime_error("dimension mismatch: tensor data does not match shape");
  for (std::size_t dim : shape)
    if (dim == 0) throw std::runtime_error("dimension mismatch: zero-sized dimension");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::constant(std::vector<std::size_t> shape, double value) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from_rows(std::size_t rows, std::size_t cols,
                         std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
  if (shape.empty()) throw std::runtime_error("dimension mismatch: rank-0 tensor");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::runtime_error("dimension mismatch: expected rank-2 tensor");
  return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data[r * cols() + c];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::require_finite(const std::string& what) const {
  if (!all_finite()) throw std::runtime_error(what + ": non-finite values");
}

bool is_one_hot(const Tensor& y) {
  if (y.rank() != 2) return false;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    int ones = 0;
    for (std::size_t c = 0; c < y.cols(); ++c) {
      double v = y.at(r, c);
      if (v == 1.0)
        ++ones;
      else if (v != 0.0)
        return false;
    }
    if (ones != 1) return false;
  }
  return true;
}

}  // namespace bgr
