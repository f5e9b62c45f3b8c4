#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>

namespace rsnn {

using Index = Eigen::Index;

/// Row-major tensor extents, rank 0 to 4.
class Shape {
 public:
  static constexpr int kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<Index> dims) : Shape(std::span<const Index>(dims.begin(), dims.size())) {}
  explicit Shape(std::span<const Index> dims) {
    if (dims.size() > kMaxRank) throw std::invalid_argument("Shape: rank exceeds 4");
    rank_ = static_cast<int>(dims.size());
    for (int i = 0; i < rank_; ++i) {
      if (dims[i] < 0) throw std::invalid_argument("Shape: negative extent");
      dims_[i] = dims[i];
    }
  }

  int rank() const { return rank_; }
  Index operator[](int axis) const { return dims_[axis]; }
  std::span<const Index> dims() const { return {dims_.data(), static_cast<std::size_t>(rank_)}; }

  Index numel() const {
    Index n = 1;
    for (int i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  /// Shape with the leading axis removed.
  Shape tail() const { return rank_ == 0 ? Shape{} : Shape(dims().subspan(1)); }

  /// Shape with `extent` prepended as a new leading axis.
  Shape prepend(Index extent) const {
    std::array<Index, kMaxRank> d{};
    d[0] = extent;
    std::copy_n(dims_.begin(), rank_, d.begin() + 1);
    return Shape(std::span<const Index>(d.data(), rank_ + 1));
  }

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.rank_ == b.rank_ && std::equal(a.dims_.begin(), a.dims_.begin() + a.rank_, b.dims_.begin());
  }

  std::string to_string() const {
    std::ostringstream os;
    os << '(';
    for (int i = 0; i < rank_; ++i) os << (i ? ", " : "") << dims_[i];
    os << ')';
    return os.str();
  }

 private:
  std::array<Index, kMaxRank> dims_{};
  int rank_ = 0;
};

/// Dense row-major tensor of `Scalar` values backed by an Eigen array.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(Array::Zero(shape.numel())) {}
  Tensor(const Shape& shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_.to_string());
    }
  }
  Tensor(const Shape& shape, std::initializer_list<Scalar> values) : Tensor(shape, Array(shape.numel())) {
    if (static_cast<Index>(values.size()) != shape.numel())
      throw std::invalid_argument("Tensor: initializer length does not match shape " + shape.to_string());
    std::copy(values.begin(), values.end(), data_.data());
  }

  static Tensor zeros(const Shape& shape) { return Tensor(shape); }
  static Tensor constant(const Shape& shape, Scalar value) { return Tensor(shape, Array::Constant(shape.numel(), value)); }

  const Shape& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0 && shape_.rank() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  template <typename... Ix>
  Scalar& at(Ix... ix) { return data_[offset(ix...)]; }
  template <typename... Ix>
  Scalar at(Ix... ix) const { return data_[offset(ix...)]; }

  /// Views the data as a (rows x cols) row-major matrix; rows * cols must equal size().
  MatrixMap matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }

  /// Leading-axis slice `i` as an owning tensor.
  Tensor slice(Index i) const {
    const Shape sub = shape_.tail();
    const Index n = sub.numel();
    return Tensor(sub, data_.segment(i * n, n));
  }

  Tensor reshaped(const Shape& shape) const {
    if (shape.numel() != shape_.numel())
      throw std::invalid_argument("reshape: " + shape_.to_string() + " -> " + shape.to_string());
    return Tensor(shape, data_);
  }

  template <typename To>
  Tensor<To> cast() const {
    return Tensor<To>(shape_, data_.template cast<To>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  template <typename... Ix>
  Index offset(Ix... ix) const {
    const std::array<Index, sizeof...(Ix)> idx{static_cast<Index>(ix)...};
    Index off = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) off = off * shape_[static_cast<int>(a)] + idx[a];
    return off;
  }

  void check_view(Index rows, Index cols) const {
    if (rows * cols != data_.size())
      throw std::invalid_argument("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                                  " over tensor " + shape_.to_string());
  }

  Shape shape_;
  Array data_;
};

}  // namespace rsnn
