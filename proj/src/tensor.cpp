#include "amdm/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace amdm {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(numel(shape_), fill) {
  for (auto d : shape_)
    if (d == 0) throw std::invalid_argument("tensor: zero-sized dimension in " + to_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  for (auto d : shape_)
    if (d == 0) throw std::invalid_argument("tensor: zero-sized dimension in " + to_string(shape_));
  if (numel(shape_) != data_.size())
    throw std::invalid_argument("tensor: shape " + to_string(shape_) + " needs " +
                                std::to_string(numel(shape_)) + " values, got " +
                                std::to_string(data_.size()));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw std::out_of_range("tensor: axis " + std::to_string(axis) + " out of range for " +
                            to_string(shape_));
  return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size())
    throw std::invalid_argument("tensor: index rank mismatch for " + to_string(shape_));
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) throw std::out_of_range("tensor: index out of range");
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size())
    throw std::invalid_argument("reshape: cannot view " + to_string(shape_) + " as " +
                                to_string(shape));
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice0(std::size_t begin, std::size_t count) const {
  if (shape_.empty() || begin + count > shape_[0] || count == 0)
    throw std::out_of_range("slice0: rows [" + std::to_string(begin) + ", " +
                            std::to_string(begin + count) + ") of " + to_string(shape_));
  Shape s = shape_;
  s[0] = count;
  const std::size_t row = data_.size() / shape_[0];
  std::vector<double> v(data_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                        data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * row));
  return Tensor(std::move(s), std::move(v));
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::sum() const noexcept { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::squared_norm() const noexcept {
  double acc = 0.0;
  for (double v : data_) acc += v * v;
  return acc;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + to_string(a.shape()) +
                                " vs " + to_string(b.shape()));
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

Tensor concat0(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat0: no inputs");
  Shape s = parts[0].shape();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != s.size() || !std::equal(s.begin() + 1, s.end(), p.shape().begin() + 1))
      throw std::invalid_argument("concat0: trailing dims differ: " + to_string(s) + " vs " +
                                  to_string(p.shape()));
    rows += p.dim(0);
  }
  s[0] = rows;
  std::vector<double> v;
  v.reserve(numel(s));
  for (const auto& p : parts) v.insert(v.end(), p.storage().begin(), p.storage().end());
  return Tensor(std::move(s), std::move(v));
}

}  // namespace amdm
