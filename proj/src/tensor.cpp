#include "tstar/tensor.hpp"

#include <cassert>

namespace tstar::nn {

void matmul_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  assert(a.cols == b.rows);
  if (out.rows != a.rows || out.cols != b.cols) out = Tensor(a.rows, b.cols);
  if (!accumulate) out.zero();
  const std::size_t n = a.rows, k = a.cols, m = b.cols;
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = &a.data[i * k];
    double* orow = &out.data[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = &b.data[p * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_nt_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  assert(a.cols == b.cols);
  if (out.rows != a.rows || out.cols != b.rows) out = Tensor(a.rows, b.rows);
  if (!accumulate) out.zero();
  const std::size_t n = a.rows, k = a.cols, m = b.rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = &a.data[i * k];
    double* orow = &out.data[i * m];
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = &b.data[j * k];
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      orow[j] += acc;
    }
  }
}

void matmul_tn_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  assert(a.rows == b.rows);
  if (out.rows != a.cols || out.cols != b.cols) out = Tensor(a.cols, b.cols);
  if (!accumulate) out.zero();
  const std::size_t n = a.cols, k = a.rows, m = b.cols;
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = &a.data[p * n];
    const double* brow = &b.data[p * m];
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = &out.data[i * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace tstar::nn
