#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "loftr/tensor.hpp"

namespace loftr::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<real> values(shape_numel(shape));
  for (real& v : values) v = real(dist(rng));
  return Tensor::from_data(std::move(shape), std::move(values));
}

inline double max_abs_diff(std::span<const real> a, std::span<const real> b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  return worst;
}

// Plain triple loop over row-major [m,k] x [k,n].
inline std::vector<double> naive_matmul(std::span<const real> a, std::span<const real> b, std::size_t m,
                                        std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < k; ++t) out[i * n + j] += double(a[i * k + t]) * double(b[t * n + j]);
  return out;
}

}  // namespace loftr::testing
