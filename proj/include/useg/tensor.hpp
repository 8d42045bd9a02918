#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace useg {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

/// Thrown when operand dimensions do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces NaN or Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Index shape_size(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& dims) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) out << (i ? "x" : "") << dims[i];
  out << ']';
  return out.str();
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major N-d array. Images use batch x channels x height x width.
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;

  explicit Tensor(Shape dims) : dims_(std::move(dims)) {
    check_dims();
    values_ = Vector::Zero(shape_size(dims_));
  }

  Tensor(Shape dims, Vector values) : dims_(std::move(dims)), values_(std::move(values)) {
    check_dims();
    if (values_.size() != shape_size(dims_)) {
      throw ShapeError("tensor: " + std::to_string(values_.size()) + " values for dims " +
                       shape_string(dims_));
    }
  }

  static Tensor constant(Shape dims, Scalar value) {
    Tensor t(std::move(dims));
    t.values_.setConstant(value);
    return t;
  }

  template <typename Rng>
  static Tensor random_normal(Shape dims, Rng& rng, Scalar stddev = Scalar(1)) {
    Tensor t(std::move(dims));
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (Index i = 0; i < t.size(); ++i) t.values_[i] = static_cast<Scalar>(dist(rng));
    return t;
  }

  template <typename Rng>
  static Tensor random_uniform(Shape dims, Rng& rng, Scalar lo, Scalar hi) {
    Tensor t(std::move(dims));
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (Index i = 0; i < t.size(); ++i) t.values_[i] = static_cast<Scalar>(dist(rng));
    return t;
  }

  const Shape& dims() const noexcept { return dims_; }
  Index dim(std::size_t axis) const { return dims_.at(axis); }
  Index rank() const noexcept { return static_cast<Index>(dims_.size()); }
  Index size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.size() == 0; }

  Vector& values() noexcept { return values_; }
  const Vector& values() const noexcept { return values_; }
  Scalar* data() noexcept { return values_.data(); }
  const Scalar* data() const noexcept { return values_.data(); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  Scalar& operator()(Index n, Index c, Index h, Index w) { return values_[offset(n, c, h, w)]; }
  Scalar operator()(Index n, Index c, Index h, Index w) const {
    return values_[offset(n, c, h, w)];
  }

  Index offset(Index n, Index c, Index h, Index w) const {
    return ((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w;
  }

  /// Batch item `n` of a rank-4 tensor viewed as a channels x (height*width) matrix.
  MatrixMap item(Index n) {
    const Index plane = dims_[2] * dims_[3];
    return MatrixMap(values_.data() + n * dims_[1] * plane, dims_[1], plane);
  }
  ConstMatrixMap item(Index n) const {
    const Index plane = dims_[2] * dims_[3];
    return ConstMatrixMap(values_.data() + n * dims_[1] * plane, dims_[1], plane);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(dims_, values_.template cast<Other>());
  }

  bool all_finite() const { return values_.allFinite(); }

  /// Exact elementwise equality, including dims.
  bool operator==(const Tensor& other) const {
    return dims_ == other.dims_ && values_ == other.values_;
  }

 private:
  void check_dims() const {
    for (Index d : dims_) {
      if (d <= 0) throw ShapeError("tensor: non-positive dimension in " + shape_string(dims_));
    }
  }

  Shape dims_;
  Vector values_;
};

template <typename Scalar>
Scalar dot(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("dot: " + shape_string(a.dims()) + " vs " + shape_string(b.dims()));
  }
  return a.values().dot(b.values());
}

template <typename Scalar>
void require_rank4(const Tensor<Scalar>& t, const char* what) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(what) + ": expected rank-4 tensor, got " + shape_string(t.dims()));
  }
}

template <typename Scalar>
const Tensor<Scalar>& require_finite(const Tensor<Scalar>& t, const char* what) {
  if (!t.all_finite()) throw NumericalError(std::string(what) + ": non-finite value");
  return t;
}

}  // namespace useg
