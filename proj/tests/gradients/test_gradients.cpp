// Built with LOFTR_USE_DOUBLE against the double-precision library.
#include <gtest/gtest.h>

#include <random>

#include "loftr/grad_check.hpp"
#include "loftr/gradient_suite.hpp"
#include "loftr/tensor.hpp"
#include "loftr/training.hpp"

using namespace loftr;

namespace {

Tensor random_leaf(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1, 1);
  std::vector<real> values(shape_numel(shape));
  for (real& v : values) v = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(values));
}

class SuiteEntry : public ::testing::Test {
 public:
  explicit SuiteEntry(GradientCheckEntry entry) : entry_(std::move(entry)) {}
  void TestBody() override {
    EXPECT_GT(entry_.components, 0u);
    EXPECT_LT(entry_.max_rel_err, 1e-3) << "analytic " << entry_.worst_analytic << " numeric "
                                         << entry_.worst_numeric;
  }

 private:
  GradientCheckEntry entry_;
};

}  // namespace

TEST(GradCheck, SumOfSmallVector) {
  const Tensor x = Tensor::from_data({2}, {1.0, 2.0});
  const GradCheckResult r = grad_check([](const Tensor& t) { return sum(t); }, x);
  EXPECT_LT(r.max_rel_err, 1e-6);
  EXPECT_EQ(r.components, 2u);
}

TEST(GradCheck, HalfSquaredNorm) {
  const Tensor x = random_leaf({3, 4}, 1);
  const GradCheckResult r = grad_check([](const Tensor& t) { return scale(sum(mul(t, t)), 0.5); }, x);
  EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(GradCheck, CoarseLossThroughDualSoftmax) {
  const Tensor scores = random_leaf({4, 4}, 3);
  const std::vector<std::vector<CellPair>> truth{{{0, 1}, {3, 2}}};
  const GradCheckResult r =
      grad_check([&](const Tensor& s) { return coarse_loss(dual_softmax(s), truth).value; }, scores);
  EXPECT_LT(r.max_rel_err, 1e-6);
}

TEST(GradCheck, DetectsAWrongGradient) {
  // exp(x) composed with a forward-only copy has no gradient path through the
  // copy, so the analytic and numeric gradients disagree.
  const Tensor x = random_leaf({4}, 2);
  const GradCheckResult r = grad_check(
      [](const Tensor& t) {
        const Tensor frozen = Tensor::from_data(t.shape(), t.to_vector());
        return sum(mul(exp(t), frozen));
      },
      x);
  EXPECT_GT(r.max_rel_err, 1e-2);
}

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  for (GradientCheckEntry& entry : run_gradient_suite(1e-3)) {
    std::string name = entry.name;
    for (char& c : name)
      if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    ::testing::RegisterTest("GradientSuite", name.c_str(), nullptr, nullptr, __FILE__, __LINE__,
                            [entry]() -> ::testing::Test* { return new SuiteEntry(entry); });
  }
  return RUN_ALL_TESTS();
}
