#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace bgr {

// Dense row-major array of doubles. Most of the toolkit works with rank-2
// tensors (batch x dim); rank-1 and rank-3 show up in dataset loading.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor constant(std::vector<std::size_t> shape, double value);
  // 2-D convenience: values listed row by row.
  static Tensor from_rows(std::size_t rows, std::size_t cols,
                          std::initializer_list<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  bool all_finite() const;
  void require_finite(const std::string& what) const;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

// True when every row has exactly one entry equal to 1 and the rest 0.
bool is_one_hot(const Tensor& y);

}  // namespace bgr
