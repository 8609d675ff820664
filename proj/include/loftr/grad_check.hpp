#pragma once

#include <functional>
#include <vector>

#include "loftr/tensor.hpp"

namespace loftr::LOFTR_PRECISION {

struct GradCheckResult {
  /// max over components of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
  double max_rel_err = 0;
  std::size_t worst_parameter = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  std::size_t components = 0;
};

/// Central-difference step: 1e-3 in single precision; in double precision the
/// truncation error dominates at that step, so a step near the cube root of
/// the machine epsilon is used.
#ifdef LOFTR_USE_DOUBLE
inline constexpr real kDefaultGradCheckEps = 1e-5;
#else
inline constexpr real kDefaultGradCheckEps = 1e-3f;
#endif

/// Compares reverse-mode gradients of the scalar `f(x)` against central
/// differences. Throws EvaluationError when f(x) is not finite.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           real eps = kDefaultGradCheckEps);

/// Same check over several parameter leaves that `f` closes over. The leaves
/// are perturbed in place and restored afterwards.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           real eps = kDefaultGradCheckEps);

}  // namespace loftr::LOFTR_PRECISION
