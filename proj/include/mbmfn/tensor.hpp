#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mbmfn {

using Index = Eigen::Index;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// NCHW extent of a tensor.
struct Shape {
  Index n = 1;
  Index c = 1;
  Index h = 1;
  Index w = 1;

  Index numel() const { return n * c * h * w; }
  Index plane() const { return h * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
    return os.str();
  }
};

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense 4-D array in NCHW order. Channel planes are row-major (w innermost).
///
/// A default-constructed tensor is "empty" (no storage); every constructed
/// tensor has all dimensions >= 1.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstPlaneMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;

  explicit Tensor(const Shape& shape) : shape_(checked(shape)), data_(Storage::Zero(shape.numel())) {}

  Tensor(const Shape& shape, Storage data) : shape_(checked(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str());
    }
  }

  static Tensor zeros(const Shape& shape) { return Tensor(shape); }
  static Tensor constant(const Shape& shape, Scalar value) {
    return Tensor(shape, Storage::Constant(checked(shape).numel(), value));
  }
  static Tensor scalar(Scalar value) { return constant(Shape{}, value); }

  bool empty() const { return data_.size() == 0; }
  const Shape& shape() const { return shape_; }
  Index n() const { return shape_.n; }
  Index c() const { return shape_.c; }
  Index h() const { return shape_.h; }
  Index w() const { return shape_.w; }
  Index size() const { return data_.size(); }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator()(Index n, Index c, Index y, Index x) { return data_[offset(n, c, y, x)]; }
  Scalar operator()(Index n, Index c, Index y, Index x) const { return data_[offset(n, c, y, x)]; }
  Scalar item() const {
    if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_.str());
    return data_[0];
  }

  Index offset(Index n, Index c, Index y, Index x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  /// (c, h*w) view of one sample.
  PlaneMap sample_matrix(Index n) { return {data() + n * shape_.c * shape_.plane(), shape_.c, shape_.plane()}; }
  ConstPlaneMap sample_matrix(Index n) const {
    return {data() + n * shape_.c * shape_.plane(), shape_.c, shape_.plane()};
  }

  /// (h, w) view of one channel plane.
  PlaneMap plane(Index n, Index c) { return {data() + offset(n, c, 0, 0), shape_.h, shape_.w}; }
  ConstPlaneMap plane(Index n, Index c) const { return {data() + offset(n, c, 0, 0), shape_.h, shape_.w}; }

  template <typename Other>
  Tensor<Other> cast() const {
    if (empty()) return {};
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  static const Shape& checked(const Shape& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) throw ShapeError("tensor dimensions must be >= 1, got " + s.str());
    return s;
  }

  Shape shape_{0, 0, 0, 0};
  Storage data_;
};

/// Throws if any element is NaN or infinite.
template <typename Scalar>
void check_finite(const Tensor<Scalar>& t, const std::string& what) {
  if (!t.all_finite()) throw std::runtime_error("non-finite values in " + what);
}

}  // namespace mbmfn
