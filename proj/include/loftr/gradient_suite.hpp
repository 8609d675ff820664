#pragma once

#include <string>
#include <vector>

namespace loftr {

struct GradientCheckEntry {
  std::string name;
  double max_rel_err = 0;
  std::size_t components = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  bool passed = false;
};

// Central-difference checks of every differentiable primitive, each module's
// differentiable operations and the full training loss on a toy pipeline.
// Available in both precisions.
namespace f32 {
std::vector<GradientCheckEntry> run_gradient_suite(double tolerance = 1e-3);
}
namespace f64 {
std::vector<GradientCheckEntry> run_gradient_suite(double tolerance = 1e-3);
}

}  // namespace loftr
