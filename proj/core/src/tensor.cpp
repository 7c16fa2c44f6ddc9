#include "causalpose/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "causalpose/errors.hpp"

namespace causalpose {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimension must be positive, got shape " + shape_str(shape));
  }
  data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
}

Tensor::Tensor(Shape s, double fill) : Tensor(std::move(s)) {
  std::fill(data.begin(), data.end(), fill);
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
    throw ShapeError("tensor data size " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data.assign(1, v);
  return t;
}

int Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for shape " + shape_str(shape));
  return shape[static_cast<size_t>(axis)];
}

double& Tensor::at2(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
double Tensor::at2(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }

double& Tensor::at3(int i, int j, int k) {
  return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
}
double Tensor::at3(int i, int j, int k) const {
  return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::str(int max_elems) const {
  std::ostringstream os;
  os << shape_str(shape) << " {";
  int64_t n = std::min<int64_t>(numel(), max_elems);
  for (int64_t i = 0; i < n; ++i) {
    if (i) os << ", ";
    os << data[static_cast<size_t>(i)];
  }
  if (numel() > n) os << ", ...";
  os << "}";
  return os.str();
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  if (a.data.empty()) return b.data.empty();
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace causalpose
