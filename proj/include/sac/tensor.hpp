#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "sac/common.hpp"
#include "sac/rng.hpp"

namespace sac {

// Dense row-major double tensor. Small and value-semantic; every shape this
// toolkit touches fits comfortably in memory.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
    data.assign(numel_of(shape), fill);
  }
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    require(data.size() == numel_of(shape), Errc::shape, "tensor data does not match shape");
  }

  static size_t numel_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      require(d >= 0, Errc::shape, "negative dimension");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  size_t numel() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }

  // 2-D accessors; used heavily by the matrix paths.
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(0.0); }

  static Tensor randn(std::vector<int> s, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = rng.normal(0.0, stddev);
    return t;
  }

  std::string shape_str() const {
    std::string out = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(shape[i]);
    }
    return out + "]";
  }
};

// C = A(m,k) * B(k,n)
inline void matmul(const Tensor& a, const Tensor& b, Tensor& c) {
  int m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, Errc::shape, "matmul inner dimensions " + a.shape_str() + " x " + b.shape_str());
  c = Tensor({m, n});
  for (int i = 0; i < m; ++i) {
    const double* arow = &a.data[static_cast<size_t>(i) * k];
    double* crow = &c.data[static_cast<size_t>(i) * n];
    for (int p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = &b.data[static_cast<size_t>(p) * n];
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C = A(m,k) * B(n,k)^T
inline void matmul_bt(const Tensor& a, const Tensor& b, Tensor& c) {
  int m = a.rows(), k = a.cols(), n = b.rows();
  require(b.cols() == k, Errc::shape, "matmul_bt inner dimensions");
  c = Tensor({m, n});
  for (int i = 0; i < m; ++i) {
    const double* arow = &a.data[static_cast<size_t>(i) * k];
    for (int j = 0; j < n; ++j) {
      const double* brow = &b.data[static_cast<size_t>(j) * k];
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c.data[static_cast<size_t>(i) * n + j] = acc;
    }
  }
}

// C = A(k,m)^T * B(k,n); accumulates into c when acc is true.
inline void matmul_at(const Tensor& a, const Tensor& b, Tensor& c, bool acc = false) {
  int k = a.rows(), m = a.cols(), n = b.cols();
  require(b.rows() == k, Errc::shape, "matmul_at inner dimensions");
  if (!acc) c = Tensor({m, n});
  for (int p = 0; p < k; ++p) {
    const double* arow = &a.data[static_cast<size_t>(p) * m];
    const double* brow = &b.data[static_cast<size_t>(p) * n];
    for (int i = 0; i < m; ++i) {
      double av = arow[i];
      if (av == 0.0) continue;
      double* crow = &c.data[static_cast<size_t>(i) * n];
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace sac
