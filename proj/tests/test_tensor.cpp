#include <gtest/gtest.h>

#include <array>

#include "weightpress/linalg.hpp"
#include "weightpress/random.hpp"
#include "weightpress/tensor.hpp"

using namespace weightpress;

TEST(Tensor, ZeroInitialisedWithShape) {
  DenseTensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.ndim(), 3u);
  EXPECT_EQ(count_zeros(t), 24u);
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(DenseTensor(Shape{}), ShapeError);
  EXPECT_THROW(DenseTensor(Shape{3, 0}), ShapeError);
  EXPECT_THROW(DenseTensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(Tensor, RowMajorOffsets) {
  DenseTensor t({2, 3, 4});
  const std::array<std::size_t, 3> idx{1, 2, 3};
  EXPECT_EQ(t.offset(idx), 1u * 12 + 2 * 4 + 3);
  const std::array<std::size_t, 3> bad{2, 0, 0};
  EXPECT_THROW((void)t.offset(bad), ShapeError);
  EXPECT_EQ(row_major_strides({2, 3, 4}), (std::vector<std::size_t>{12, 4, 1}));
}

TEST(Tensor, RowsColsOnlyForMatrices) {
  DenseTensor t({2, 3, 4});
  EXPECT_THROW((void)t.rows(), ShapeError);
  EXPECT_EQ(DenseTensor::matrix(5, 7).cols(), 7u);
}

TEST(Tensor, FlattenConvKeepsData) {
  std::vector<float> v(2 * 3 * 2 * 2);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  DenseTensor w({2, 3, 2, 2}, v);
  const auto f = flatten_conv(w);
  EXPECT_EQ(f.shape(), (Shape{2, 12}));
  EXPECT_EQ(f(1, 0), 12.0f);
  EXPECT_EQ(unflatten_conv(f, w.shape()), w);
  EXPECT_THROW(flatten_conv(DenseTensor({2, 3})), ShapeError);
  EXPECT_THROW(unflatten_conv(f, {3, 3, 2, 2}), ShapeError);
}

TEST(Tensor, AsMatrix) {
  EXPECT_EQ(as_matrix(DenseTensor({5})).shape(), (Shape{1, 5}));
  EXPECT_EQ(as_matrix(DenseTensor({2, 3, 4})).shape(), (Shape{2, 12}));
  EXPECT_EQ(as_matrix(DenseTensor({2, 3, 4, 5})).shape(), (Shape{2, 60}));
}

TEST(Tensor, Norms) {
  DenseTensor t({2, 2}, {3, 0, 0, 4});
  EXPECT_DOUBLE_EQ(squared_norm(t), 25.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(t), 5.0);
  EXPECT_TRUE(all_finite(t));
  t[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(all_finite(t));
}

TEST(Linalg, MatmulAndTranspose) {
  DenseTensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  DenseTensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  const auto c = matmul(a, b);
  EXPECT_EQ(c, DenseTensor({2, 2}, {58, 64, 139, 154}));
  EXPECT_EQ(transpose(a), DenseTensor({3, 2}, {1, 4, 2, 5, 3, 6}));
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Random, DeterministicStreams) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_NE(Rng(42).next_u64(), c.next_u64());
  EXPECT_NE(derive_seed(1, 1), derive_seed(1, 2));
  EXPECT_NE(layer_seed(7, "conv1"), layer_seed(7, "conv2"));
  EXPECT_EQ(layer_seed(7, "conv1"), layer_seed(7, "conv1"));
}

TEST(Random, NormalMoments) {
  Rng rng(5);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}
