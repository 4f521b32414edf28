#pragma once

#include <cmath>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "seqtag/errors.hpp"

namespace seqtag {

// Dense row-major array of doubles. One or two dimensions is all the model
// needs; rank is kept generic only where it costs nothing.
struct Array {
  std::vector<int> shape;
  std::vector<double> data;

  Array() = default;

  explicit Array(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(count(shape)), 0.0);
  }

  Array(std::vector<int> s, std::vector<double> values)
      : shape(std::move(s)), data(std::move(values)) {
    if (static_cast<size_t>(count(shape)) != data.size())
      throw ShapeError("Array: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_string(shape));
  }

  static long count(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static Array zeros(std::vector<int> s) { return Array(std::move(s)); }

  static Array full(std::vector<int> s, double v) {
    Array a(std::move(s));
    for (double& x : a.data) x = v;
    return a;
  }

  static Array scalar(double v) { return Array({1}, {v}); }

  int ndim() const { return static_cast<int>(shape.size()); }
  int size() const { return static_cast<int>(data.size()); }
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }

  double& operator[](int i) { return data[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<size_t>(i)]; }

  double& operator()(int i, int j) {
    return data[static_cast<size_t>(i) * shape[1] + j];
  }
  double operator()(int i, int j) const {
    return data[static_cast<size_t>(i) * shape[1] + j];
  }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static std::string shape_string(const std::vector<int>& s) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < s.size(); ++i) {
      if (i) os << 'x';
      os << s[i];
    }
    os << ')';
    return os.str();
  }

  std::string shape_string() const { return shape_string(shape); }

  friend bool operator==(const Array& a, const Array& b) {
    return a.shape == b.shape && a.data == b.data;
  }
};

inline void require_same_shape(const char* kernel, const Array& a,
                               const Array& b) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(kernel) + ": shape mismatch " +
                     a.shape_string() + " vs " + b.shape_string());
}

}  // namespace seqtag
