// Dense row-major arrays and image aliases shared by every gskit module.
//
// Multi-channel quantities (RGB, feature maps, network activations) live in
// BasicTensor<Scalar>; single-channel H x W images use the Eigen row-major
// matrix aliases below so that Eigen expressions apply directly.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gskit {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using ImageT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Image = ImageT<double>;
using LabelImage = ImageT<int>;
using MaskImage = ImageT<std::uint8_t>;

std::string shape_string(const Shape& shape);

inline Index element_count(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

/// Pixel coordinate (row, column) into an H x W grid.
struct PixelIndex {
  Index row = 0;
  Index col = 0;

  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

template <typename Derived>
bool contains(const Eigen::DenseBase<Derived>& image, PixelIndex p) {
  return p.row >= 0 && p.col >= 0 && p.row < image.rows() && p.col < image.cols();
}

/// Dense row-major array with shape metadata.
///
/// Invariant: element_count(shape()) == size(). A rank-0 tensor holds one
/// value and broadcasts against any shape in the elementwise operations.
template <typename Scalar_>
class BasicTensor {
 public:
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<ImageT<Scalar>>;
  using ConstPlaneMap = Eigen::Map<const ImageT<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(Array::Constant(element_count(shape_), fill)) {}

  BasicTensor(Shape shape, std::initializer_list<Scalar> values) : shape_(std::move(shape)) {
    data_.resize(static_cast<Index>(values.size()));
    std::copy(values.begin(), values.end(), data_.data());
    check_size();
  }

  BasicTensor(Shape shape, Array values) : shape_(std::move(shape)), data_(std::move(values)) {
    check_size();
  }

  static BasicTensor scalar(Scalar v) { return BasicTensor(Shape{}, v); }

  template <typename Derived>
  static BasicTensor from_image(const Eigen::DenseBase<Derived>& image) {
    BasicTensor t(Shape{image.rows(), image.cols()});
    t.plane(0) = image.template cast<Scalar>();
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }
  Index dim(Index axis) const {
    if (axis < 0 || axis >= rank()) throw std::out_of_range("axis out of range for " + shape_string(shape_));
    return shape_[static_cast<std::size_t>(axis)];
  }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> values() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> values() const { return {data_.data(), static_cast<std::size_t>(data_.size())}; }

  Index offset(std::span<const Index> idx) const {
    if (static_cast<Index>(idx.size()) != rank()) {
      throw std::out_of_range("index rank " + std::to_string(idx.size()) + " does not match " + shape_string(shape_));
    }
    Index off = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= shape_[i]) throw std::out_of_range("index out of range for " + shape_string(shape_));
      off = off * shape_[i] + idx[i];
    }
    return off;
  }

  Scalar& at(std::initializer_list<Index> idx) { return data_[offset({idx.begin(), idx.size()})]; }
  Scalar at(std::initializer_list<Index> idx) const { return data_[offset({idx.begin(), idx.size()})]; }
  Scalar& at(std::span<const Index> idx) { return data_[offset(idx)]; }
  Scalar at(std::span<const Index> idx) const { return data_[offset(idx)]; }

  template <typename... I>
  Scalar& operator()(I... idx) {
    return data_[fast_offset(static_cast<Index>(idx)...)];
  }
  template <typename... I>
  Scalar operator()(I... idx) const {
    return data_[fast_offset(static_cast<Index>(idx)...)];
  }

  /// H x W view of the trailing two axes; `lead` is the flat index over the
  /// leading axes (channel for C x H x W, n * C + c for N x C x H x W).
  PlaneMap plane(Index lead) {
    auto [h, w] = plane_extents();
    return PlaneMap(data_.data() + lead * h * w, h, w);
  }
  ConstPlaneMap plane(Index lead) const {
    auto [h, w] = plane_extents();
    return ConstPlaneMap(data_.data() + lead * h * w, h, w);
  }
  Index plane_count() const {
    auto [h, w] = plane_extents();
    return h * w == 0 ? 0 : size() / (h * w);
  }

  BasicTensor reshaped(Shape shape) const {
    if (element_count(shape) != size()) {
      throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  bool same_shape(const BasicTensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  void check_size() const {
    if (element_count(shape_) != data_.size()) {
      throw std::invalid_argument("shape " + shape_string(shape_) + " needs " + std::to_string(element_count(shape_)) +
                                  " values, got " + std::to_string(data_.size()));
    }
  }

  std::pair<Index, Index> plane_extents() const {
    if (rank() < 2) return {1, size()};
    return {shape_[shape_.size() - 2], shape_[shape_.size() - 1]};
  }

  template <typename... I>
  Index fast_offset(I... idx) const {
    Index off = 0;
    std::size_t axis = 0;
    ((off = off * shape_[axis++] + idx), ...);
    return off;
  }

  Shape shape_;
  Array data_;
};

using Tensor = BasicTensor<double>;

namespace detail {
[[noreturn]] void throw_non_finite(const char* op);
}

template <typename Scalar>
void ensure_finite(const BasicTensor<Scalar>& t, const char* op) {
  if (!t.array().isFinite().all()) detail::throw_non_finite(op);
}

/// Applies `op` to every element. Throws std::domain_error if the result
/// contains a non-finite value.
template <typename Scalar, typename UnaryOp>
BasicTensor<Scalar> elementwise(UnaryOp op, const BasicTensor<Scalar>& a) {
  BasicTensor<Scalar> out(a.shape());
  std::transform(a.data(), a.data() + a.size(), out.data(), op);
  ensure_finite(out, "elementwise");
  return out;
}

/// Binary map with scalar broadcasting: shapes must match, or one operand
/// must be rank 0.
template <typename Scalar, typename BinaryOp>
BasicTensor<Scalar> elementwise(BinaryOp op, const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() == b.shape()) {
    BasicTensor<Scalar> out(a.shape());
    std::transform(a.data(), a.data() + a.size(), b.data(), out.data(), op);
    ensure_finite(out, "elementwise");
    return out;
  }
  if (b.rank() == 0) {
    const Scalar s = b.data()[0];
    return elementwise([&](Scalar x) { return op(x, s); }, a);
  }
  if (a.rank() == 0) {
    const Scalar s = a.data()[0];
    return elementwise([&](Scalar x) { return op(s, x); }, b);
  }
  throw std::invalid_argument("shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

template <typename Scalar>
BasicTensor<Scalar> operator+(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return elementwise(std::plus<Scalar>(), a, b);
}
template <typename Scalar>
BasicTensor<Scalar> operator-(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return elementwise(std::minus<Scalar>(), a, b);
}
template <typename Scalar>
BasicTensor<Scalar> operator*(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return elementwise(std::multiplies<Scalar>(), a, b);
}
template <typename Scalar>
BasicTensor<Scalar> operator/(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return elementwise(std::divides<Scalar>(), a, b);
}
template <typename Scalar>
BasicTensor<Scalar> sqrt(const BasicTensor<Scalar>& a) {
  return elementwise([](Scalar x) { return std::sqrt(x); }, a);
}

/// Saturates every value to the closed interval [lo, hi].
template <typename Scalar>
BasicTensor<Scalar> clamp(const BasicTensor<Scalar>& a, Scalar lo, Scalar hi) {
  if (!(lo < hi)) throw std::invalid_argument("clamp requires lo < hi");
  BasicTensor<Scalar> out(a.shape());
  out.array() = a.array().max(lo).min(hi);
  return out;
}

template <typename Derived>
auto clamp_unit(const Eigen::ArrayBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  return a.max(Scalar(-1)).min(Scalar(1));
}

enum class Reduction { sum, mean, min, max };

/// Reduces over `axes` (all axes when empty); reduced axes are removed from
/// the result shape.
template <typename Scalar>
BasicTensor<Scalar> reduce(const BasicTensor<Scalar>& a, Reduction kind, std::vector<Index> axes = {}) {
  const Index r = a.rank();
  if (axes.empty()) {
    for (Index i = 0; i < r; ++i) axes.push_back(i);
  }
  std::vector<bool> reduced(static_cast<std::size_t>(r), false);
  for (Index ax : axes) {
    if (ax < 0 || ax >= r || reduced[static_cast<std::size_t>(ax)]) {
      throw std::invalid_argument("invalid reduction axis " + std::to_string(ax) + " for " + shape_string(a.shape()));
    }
    reduced[static_cast<std::size_t>(ax)] = true;
  }
  Shape out_shape;
  Index group = 1;
  for (Index i = 0; i < r; ++i) {
    if (reduced[static_cast<std::size_t>(i)]) {
      group *= a.shape()[static_cast<std::size_t>(i)];
    } else {
      out_shape.push_back(a.shape()[static_cast<std::size_t>(i)]);
    }
  }
  if (group == 0 || a.size() == 0) throw std::invalid_argument("empty reduction over " + shape_string(a.shape()));

  const Scalar init = kind == Reduction::min   ? std::numeric_limits<Scalar>::infinity()
                      : kind == Reduction::max ? -std::numeric_limits<Scalar>::infinity()
                                               : Scalar(0);
  BasicTensor<Scalar> out(out_shape, init);
  std::vector<Index> idx(static_cast<std::size_t>(r), 0);
  for (Index flat = 0; flat < a.size(); ++flat) {
    Index o = 0;
    for (Index i = 0; i < r; ++i) {
      if (!reduced[static_cast<std::size_t>(i)]) o = o * a.shape()[static_cast<std::size_t>(i)] + idx[static_cast<std::size_t>(i)];
    }
    const Scalar v = a.data()[flat];
    Scalar& acc = out.data()[o];
    switch (kind) {
      case Reduction::sum:
      case Reduction::mean: acc += v; break;
      case Reduction::min: acc = std::min(acc, v); break;
      case Reduction::max: acc = std::max(acc, v); break;
    }
    for (Index i = r - 1; i >= 0; --i) {
      auto& k = idx[static_cast<std::size_t>(i)];
      if (++k < a.shape()[static_cast<std::size_t>(i)]) break;
      k = 0;
    }
  }
  if (kind == Reduction::mean) out.array() /= static_cast<Scalar>(group);
  return out;
}

}  // namespace gskit
