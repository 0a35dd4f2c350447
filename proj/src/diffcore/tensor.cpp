#include "fairdemand/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "fairdemand/error.hpp"

namespace fairdemand::diff {

std::string to_string(Shape s) {
  return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : shape_{rows, cols}, data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : shape_{rows, cols}, data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw ValidationError("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + to_string(shape_));
  }
}

Tensor Tensor::column(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(n, 1, std::move(values));
}

Tensor Tensor::row(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(1, n, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ValidationError("ragged tensor literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(v));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

void Tensor::reshape(Shape s) {
  if (s.size() != data_.size()) {
    throw ValidationError("cannot reshape " + to_string(shape_) + " to " + to_string(s));
  }
  shape_ = s;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  // x - x is NaN for NaN and infinities, zero otherwise.
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t n = data_.size();
  const double* d = data_.data();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    for (std::size_t k = 0; k < 4; ++k) acc[k] += d[i + k] - d[i + k];
  for (; i < n; ++i) acc[0] += d[i] - d[i];
  return acc[0] + acc[1] + acc[2] + acc[3] == 0.0;
}

Tensor Tensor::transposed() const {
  Tensor t(shape_.cols, shape_.rows);
  for (std::size_t r = 0; r < shape_.rows; ++r)
    for (std::size_t c = 0; c < shape_.cols; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ValidationError("item() on non-scalar " + to_string(shape_));
  return data_[0];
}

}  // namespace fairdemand::diff
