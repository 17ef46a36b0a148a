#pragma once

#include <initializer_list>
#include <vector>

#include "vaot/rng.hpp"
#include "vaot/tensor.hpp"

namespace vaot::testing {

inline Grid make_grid(int h, int w, std::initializer_list<double> vals) {
  Grid g(h, w);
  auto it = vals.begin();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) g(y, x) = *it++;
  return g;
}

inline Grid const_grid(int h, int w, double v) {
  Grid g(h, w);
  g.setConstant(v);
  return g;
}

inline Grid random_grid(Rng& rng, int h, int w, double lo = 0.0, double hi = 1.0) {
  Grid g(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) g(y, x) = rng.uniform(lo, hi);
  return g;
}

inline Grid random_binary(Rng& rng, int h, int w, double density = 0.4) {
  Grid g(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) g(y, x) = rng.uniform() < density ? 1.0 : 0.0;
  return g;
}

inline Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (Eigen::Index i = 0; i < t.numel(); ++i) t.flat()[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace vaot::testing
