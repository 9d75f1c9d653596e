#include "kshot/error.hpp"
#include "kshot/methods.hpp"

#include <gtest/gtest.h>

using namespace kshot;

TEST(MethodSpec, RoundTripsCanonicalNames) {
  for (const std::string s : {"gauss:iso", "gauss:full:hmc", "niw-integrated", "gmm:4:diag", "laplace:iso",
                              "logreg:mle", "logreg:cv", "logreg:fixed:0.5", "logreg:fixed:1e-05", "logreg:wtilde",
                              "logreg:wtilde:zero", "nn", "oracle", "uniform"})
    EXPECT_EQ(to_string(parse_method_spec(s)), s);
  EXPECT_EQ(to_string(parse_method_spec("logreg:wtilde:mean")), "logreg:wtilde");
}

TEST(MethodSpec, KindsAndRequirements) {
  const auto hmc = parse_method_spec("gauss:iso:hmc");
  EXPECT_EQ(hmc.kind, MethodSpec::Kind::prior_hmc);
  EXPECT_TRUE(hmc.needs_wtilde());
  EXPECT_TRUE(hmc.supports_online());
  const auto fixed = parse_method_spec("logreg:fixed:0.125");
  EXPECT_EQ(fixed.c, 0.125);
  EXPECT_FALSE(fixed.needs_wtilde());
  EXPECT_TRUE(parse_method_spec("logreg:wtilde").needs_wtilde());
  EXPECT_FALSE(parse_method_spec("nn").supports_online());
}

TEST(MethodSpec, RejectsMalformed) {
  for (const std::string s : {"", "logreg", "logreg:fixed:", "logreg:fixed:-1", "logreg:fixed:1x", "logreg:ridge",
                              "gauss", "hmc", "knn"})
    EXPECT_THROW(parse_method_spec(s), ConfigError) << s;
}

TEST(PreparedMethod, NeedsWeightsWhenPriorBased) {
  EXPECT_THROW(PreparedMethod(parse_method_spec("gauss:iso"), nullptr), ConfigError);
  const Matrix w = (Matrix(3, 2) << 1, 0, -1, 2, 0, -2).finished();
  const PreparedMethod m(parse_method_spec("logreg:wtilde"), &w);
  ASSERT_TRUE(m.c());
  EXPECT_DOUBLE_EQ(*m.c(), 2 * (10.0 / 6.0));
  const PreparedMethod nn(parse_method_spec("nn"), nullptr);
  const std::vector<int> y{0};
  EXPECT_THROW(nn.learn(Matrix::Ones(1, 2), y, 1, nullptr, 0), ConfigError);
}
