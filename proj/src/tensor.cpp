#include "vaot/tensor.hpp"

#include <numeric>
#include <sstream>

namespace vaot {

static Eigen::Index shape_numel(const std::vector<int>& shape) {
  Eigen::Index n = 1;
  for (int d : shape) {
    check(d > 0, "tensor: nonpositive dimension");
    n *= d;
  }
  return n;
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data_.resize(1);
  t.data_[0] = v;
  return t;
}

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  Eigen::Index n = shape_numel(shape);
  t.shape_ = std::move(shape);
  t.data_ = Eigen::ArrayXd::Zero(n);
  return t;
}

Tensor Tensor::from_grid(const Grid& g) {
  Tensor t;
  t.shape_ = {static_cast<int>(g.rows()), static_cast<int>(g.cols())};
  t.data_.resize(g.size());
  GridMap(t.data_.data(), g.rows(), g.cols()) = g;
  return t;
}

Tensor Tensor::from_flat(std::vector<int> shape, Eigen::ArrayXd data) {
  check(shape_numel(shape) == data.size(), "tensor: shape does not match data length");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

double Tensor::scalar_value() const {
  check(is_scalar(), "tensor: scalar_value on non-scalar");
  return data_[0];
}

int Tensor::channels() const {
  if (rank() == 2) return 1;
  check(rank() == 3, "tensor: channels needs rank 2 or 3");
  return shape_[0];
}

int Tensor::height() const {
  check(rank() == 2 || rank() == 3, "tensor: height needs rank 2 or 3");
  return rank() == 2 ? shape_[0] : shape_[1];
}

int Tensor::width() const {
  check(rank() == 2 || rank() == 3, "tensor: width needs rank 2 or 3");
  return rank() == 2 ? shape_[1] : shape_[2];
}

GridMap Tensor::grid(int c) {
  int h = height(), w = width();
  check(c >= 0 && c < channels(), "tensor: channel out of range");
  return GridMap(data_.data() + static_cast<Eigen::Index>(c) * h * w, h, w);
}

ConstGridMap Tensor::grid(int c) const {
  int h = height(), w = width();
  check(c >= 0 && c < channels(), "tensor: channel out of range");
  return ConstGridMap(data_.data() + static_cast<Eigen::Index>(c) * h * w, h, w);
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '{';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << '}';
  return os.str();
}

}  // namespace vaot
