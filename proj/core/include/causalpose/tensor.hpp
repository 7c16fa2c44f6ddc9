#ifndef CAUSALPOSE_TENSOR_HPP
#define CAUSALPOSE_TENSOR_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace causalpose {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major array of 64-bit reals. Rank 0 (empty shape) is a scalar
// with one element.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, double fill);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape s) { return Tensor(std::move(s), 0.0); }
  static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }

  int rank() const { return static_cast<int>(shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int dim(int axis) const;

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // Row-major offset of a 2D / 3D index.
  double& at2(int i, int j);
  double at2(int i, int j) const;
  double& at3(int i, int j, int k);
  double at3(int i, int j, int k) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  std::string str(int max_elems = 16) const;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace causalpose

#endif
