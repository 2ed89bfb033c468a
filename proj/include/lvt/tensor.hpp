#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lvt/error.hpp"

namespace lvt {

using Real = double;
using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    LVT_CHECK(d >= 0, ShapeError, "negative extent in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

// Dense row-major tensor. The buffer is shared between copies; all ops
// allocate fresh buffers, so an existing buffer is never mutated except by
// explicit in-place methods (optimizer updates, initialization).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0.0)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<Real>>(shape_numel(shape_), fill)) {}
  Tensor(Shape shape, std::vector<Real> values)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<Real>>(std::move(values))) {
    LVT_CHECK(static_cast<int64_t>(buf_->size()) == shape_numel(shape_), ShapeError,
              "data length " + std::to_string(buf_->size()) + " does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(Real v) { return Tensor(Shape{}, std::vector<Real>{v}); }

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return buf_ ? static_cast<int64_t>(buf_->size()) : 0; }
  bool defined() const { return static_cast<bool>(buf_); }

  Real* data() { return buf_->data(); }
  const Real* data() const { return buf_->data(); }
  Real& at(int64_t i) { return (*buf_)[static_cast<size_t>(i)]; }
  Real at(int64_t i) const { return (*buf_)[static_cast<size_t>(i)]; }

  Real item() const {
    LVT_CHECK(numel() == 1, ShapeError, "item() on tensor of shape " + shape_str(shape_));
    return (*buf_)[0];
  }

  // Same buffer, new shape. Safe because buffers are write-once.
  Tensor reshaped(Shape s) const {
    LVT_CHECK(shape_numel(s) == numel(), ShapeError,
              "cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    Tensor t;
    t.shape_ = std::move(s);
    t.buf_ = buf_;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.buf_ = std::make_shared<std::vector<Real>>(*buf_);
    return t;
  }

  bool all_finite() const {
    for (Real v : *buf_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(Real v) { std::fill(buf_->begin(), buf_->end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<Real>> buf_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  LVT_CHECK(a.shape() == b.shape(), ShapeError,
            std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline void check_finite(const Tensor& t, const char* what) {
  LVT_CHECK(t.all_finite(), NumericError, std::string(what) + ": non-finite input");
}

}  // namespace lvt
