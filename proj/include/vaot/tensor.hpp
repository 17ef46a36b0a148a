#pragma once

#include <Eigen/Dense>
#include <initializer_list>
#include <vector>

#include "vaot/error.hpp"

namespace vaot {

// Row-major H x W raster, the universal spatial container.
using Grid = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using GridMap = Eigen::Map<Grid>;
using ConstGridMap = Eigen::Map<const Grid>;

// Dense value with an explicit shape over flat row-major storage.
// Rank conventions: {} scalar, {n} vector, {H,W} grid, {C,H,W} grid stack,
// {F,C,kh,kw} conv kernel bank.
class Tensor {
 public:
  Tensor() = default;

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<int> shape);
  static Tensor from_grid(const Grid& g);
  static Tensor from_flat(std::vector<int> shape, Eigen::ArrayXd data);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Eigen::Index numel() const { return data_.size(); }
  bool is_scalar() const { return shape_.empty(); }
  double scalar_value() const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Eigen::ArrayXd& flat() { return data_; }
  const Eigen::ArrayXd& flat() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  // Spatial accessors for rank-2 ({H,W}) and rank-3 ({C,H,W}) tensors.
  int channels() const;
  int height() const;
  int width() const;
  GridMap grid(int c = 0);
  ConstGridMap grid(int c = 0) const;

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  std::vector<int> shape_;
  Eigen::ArrayXd data_;
};

std::string shape_str(const std::vector<int>& shape);

}  // namespace vaot
