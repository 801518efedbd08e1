#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace raregan {

/// Dense row-major tensor of 64-bit floats. Rank is 1 or 2 in practice;
/// scalars are represented as shape {1}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor vec(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }

  // 2-D accessors; a rank-1 tensor counts as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t i) { return data[i]; }
  double operator()(std::size_t i) const { return data[i]; }
  double& operator()(std::size_t i, std::size_t j) {
    return data[i * cols() + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * cols() + j];
  }

  // Value of a one-element tensor.
  double item() const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

}  // namespace raregan
