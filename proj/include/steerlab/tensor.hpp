#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "steerlab/error.hpp"
#include "steerlab/rng.hpp"

namespace steerlab {

// Dense row-major float32 array. The single numeric substrate for the model,
// the SAE and all gradients.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;

  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0f);
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + std::to_string(d));
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int> s, float v) {
    Tensor t(std::move(s));
    for (float& x : t.data) x = v;
    return t;
  }

  static Tensor from(std::vector<int> s, std::vector<float> values) {
    Tensor t;
    t.shape = std::move(s);
    if (static_cast<int64_t>(values.size()) != numel_of(t.shape))
      throw ShapeError("data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(t.shape));
    t.data = std::move(values);
    return t;
  }

  static Tensor randn(std::vector<int> s, Rng& rng, float stddev = 1.0f) {
    Tensor t(std::move(s));
    for (float& x : t.data) x = rng.normal(0.0f, stddev);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }

  float& at(int i) { return data[static_cast<size_t>(i)]; }
  float at(int i) const { return data[static_cast<size_t>(i)]; }
  float& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
  float at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

  const float* row_ptr(int i) const { return data.data() + static_cast<size_t>(i) * cols(); }
  float* row_ptr(int i) { return data.data() + static_cast<size_t>(i) * cols(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (float x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }

  bool all_zero() const {
    for (float x : data)
      if (x != 0.0f) return false;
    return true;
  }

  void fill(float v) {
    for (float& x : data) x = v;
  }

  static std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
  }

  std::string shape_str() const { return shape_str(shape); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected matrix, got " + t.shape_str());
}

}  // namespace steerlab
