#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ph {

// Dense row-major tensor templated on scalar type. Models and training run
// on float; double instantiations back the high-precision gradient checks.
template <class S>
struct TensorT {
  std::vector<std::size_t> shape;
  std::vector<S> data;
  bool requires_grad{false};
  std::vector<S> grad;  // empty until ensure_grad(); same length as data after

  TensorT() = default;

  TensorT(std::vector<std::size_t> shp, std::vector<S> values)
      : shape(std::move(shp)), data(std::move(values)) {
    if (data.size() != element_count(shape)) {
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_string(shape));
    }
  }

  static TensorT zeros(std::vector<std::size_t> shp) {
    const std::size_t n = element_count(shp);
    return TensorT(std::move(shp), std::vector<S>(n, S(0)));
  }

  static TensorT full(std::vector<std::size_t> shp, S v) {
    const std::size_t n = element_count(shp);
    return TensorT(std::move(shp), std::vector<S>(n, v));
  }

  std::size_t size() const { return data.size(); }

  std::size_t rows() const {
    if (shape.size() != 2) throw std::logic_error("rows() on non-matrix tensor " + shape_string(shape));
    return shape[0];
  }
  std::size_t cols() const {
    if (shape.size() != 2) throw std::logic_error("cols() on non-matrix tensor " + shape_string(shape));
    return shape[1];
  }

  S& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  S at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), S(0));
  }
  void zero_grad() { grad.assign(data.size(), S(0)); }

  bool all_finite() const {
    for (const S v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  static std::size_t element_count(const std::vector<std::size_t>& shp) {
    std::size_t n = 1;
    for (const std::size_t d : shp) n *= d;
    return n;
  }

  static std::string shape_string(const std::vector<std::size_t>& shp) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shp.size(); ++i) {
      if (i) os << "x";
      os << shp[i];
    }
    os << "]";
    return os.str();
  }
};

using Tensor = TensorT<float>;

template <class To, class From>
TensorT<To> cast_tensor(const TensorT<From>& t) {
  TensorT<To> out;
  out.shape = t.shape;
  out.data.reserve(t.data.size());
  for (const From v : t.data) out.data.push_back(static_cast<To>(v));
  out.requires_grad = t.requires_grad;
  return out;
}

namespace detail {

// Accumulating matmul kernels, all row-major. The loop orders keep the inner
// loop contiguous in memory for both operands.

// C[m,n] += A[m,k] * B[k,n]
template <class S>
void mm_nn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    S* crow = c + i * n;
    const S* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const S av = arow[p];
      const S* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <class S>
void mm_nt(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const S* brow = b + j * k;
      S acc = S(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
template <class S>
void mm_tn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    const S* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const S av = arow[p];
      S* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

}  // namespace ph
