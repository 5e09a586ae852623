#include <doctest.h>

#include <cmath>

#include "g5/tensor.hpp"

TEST_SUITE("tensor") {

TEST_CASE("zeros and shape accessors") {
  g5::Tensor t = g5::Tensor::zeros({3, 4});
  CHECK(t.rank() == 2);
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 4);
  CHECK(t.numel() == 12);
  for (double x : t.data) CHECK(x == 0.0);
  CHECK(t.shape_str() == "[3x4]");
}

TEST_CASE("rank-1 tensor acts as a single row") {
  g5::Tensor t = g5::Tensor::zeros({5});
  CHECK(t.rows() == 1);
  CHECK(t.cols() == 5);
}

TEST_CASE("at addresses row-major storage") {
  g5::Tensor t = g5::Tensor::zeros({2, 3});
  t.at(1, 2) = 7.5;
  CHECK(t.data[5] == 7.5);
  t.at(0, 1) = -1.0;
  CHECK(t.data[1] == -1.0);
}

TEST_CASE("from_rows builds a matrix") {
  g5::Tensor t = g5::Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 2);
  CHECK(t.at(1, 0) == 3.0);
}

TEST_CASE("from_rows rejects ragged input") {
  CHECK_THROWS_AS(g5::Tensor::from_rows({{1.0}, {2.0, 3.0}}),
                  g5::ShapeError);
}

TEST_CASE("scalar is a one-element tensor") {
  g5::Tensor s = g5::Tensor::scalar(2.5);
  CHECK(s.numel() == 1);
  CHECK(s.data[0] == 2.5);
}

TEST_CASE("full fills every element") {
  g5::Tensor t = g5::Tensor::full({2, 2}, 3.0);
  for (double x : t.data) CHECK(x == 3.0);
}

TEST_CASE("degenerate shapes are rejected") {
  CHECK_THROWS_AS(g5::Tensor::zeros({}), g5::ShapeError);
  CHECK_THROWS_AS(g5::Tensor::zeros({0, 3}), g5::ShapeError);
  CHECK_THROWS_AS(g5::Tensor::zeros({3, 0}), g5::ShapeError);
}

TEST_CASE("grad buffer management") {
  g5::Tensor t = g5::Tensor::zeros({2, 2});
  CHECK(t.grad.empty());
  t.ensure_grad();
  CHECK(t.grad.size() == t.numel());
  t.grad[1] = 5.0;
  t.zero_grad();
  CHECK(t.grad[1] == 0.0);
}

TEST_CASE("same_shape compares dims") {
  g5::Tensor a = g5::Tensor::zeros({2, 3});
  g5::Tensor b = g5::Tensor::zeros({2, 3});
  g5::Tensor c = g5::Tensor::zeros({3, 2});
  CHECK(a.same_shape(b));
  CHECK_FALSE(a.same_shape(c));
}

TEST_CASE("check_finite flags bad values") {
  g5::Tensor t = g5::Tensor::zeros({2});
  CHECK_NOTHROW(g5::check_finite(t, "here"));
  t.data[1] = std::nan("");
  CHECK_THROWS_AS(g5::check_finite(t, "here"), g5::NumericError);
  t.data[1] = INFINITY;
  CHECK_THROWS_AS(g5::check_finite(t, "here"), g5::NumericError);
}

}  // TEST_SUITE
