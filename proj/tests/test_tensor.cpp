#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace modcap;

TEST(Tensor, ShapeMatchesValueCount) {
  Tensor<double> t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t(1, 2), 1.5);
  EXPECT_THROW(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Tensor, ZeroDimensionRejected) {
  EXPECT_THROW(Tensor<double>(Shape{0}), DimensionError);
  EXPECT_THROW(Tensor<double>(Shape{3, 0}), DimensionError);
}

TEST(Tensor, ItemOnlyForSingleValue) {
  EXPECT_EQ(Tensor<double>::scalar(4.0).item(), 4.0);
  EXPECT_THROW(Tensor<double>::vector({1.0, 2.0}).item(), ContractError);
}

TEST(Tensor, MatmulExamples) {
  auto id = Tensor<double>::matrix({{1, 0}, {0, 1}});
  auto m = Tensor<double>::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul_values(id, m), m);
  EXPECT_EQ(matmul_values(Tensor<double>::matrix({{1, 2}}), Tensor<double>::matrix({{0}, {0}})),
            Tensor<double>::matrix({{0}}));
  EXPECT_EQ(matmul_values(m, Tensor<double>::matrix({{5}, {6}})), Tensor<double>::matrix({{17}, {39}}));
}

TEST(Tensor, MatmulShapeErrorNamesBothShapes) {
  try {
    matmul_values(Tensor<double>(Shape{2, 3}), Tensor<double>(Shape{2, 3}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] and [2x3]"), std::string::npos) << msg;
  }
}

TEST(Tensor, TransposeAndCast) {
  auto m = Tensor<double>::matrix({{1, 2, 3}, {4, 5, 6}});
  auto t = transpose_values(m);
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(t(2, 1), 6.0);
  auto f = m.cast<float>();
  EXPECT_EQ(f(1, 0), 4.0f);
}

TEST(Tensor, ReshapeKeepsValues) {
  auto v = Tensor<double>::vector({1, 2, 3, 4});
  auto m = v.reshaped(Shape{2, 2});
  EXPECT_EQ(m(1, 0), 3.0);
  EXPECT_THROW(v.reshaped(Shape{3}), DimensionError);
}
