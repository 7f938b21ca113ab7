#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace tstar::nn {

// Dense row-major matrix of doubles. Vectors are 1 x n or n x 1.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Tensor(std::size_t r, std::size_t c, std::initializer_list<double> init)
      : rows(r), cols(c), data(init) {}

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

// out (+)= a * b
void matmul_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);
// out (+)= a * b^T
void matmul_nt_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);
// out (+)= a^T * b
void matmul_tn_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);

}  // namespace tstar::nn
