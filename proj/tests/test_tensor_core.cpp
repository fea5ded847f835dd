#include <doctest.h>

#include <random>

#include "hsi/autograd.hpp"
#include "support/oracles.hpp"

using namespace hsi;

TEST_SUITE("tensor_core") {

TEST_CASE("conv2d matches direct loops") {
  std::mt19937_64 rng(1);
  struct Case {
    Shape x, k;
    std::size_t stride;
  };
  for (const Case& c : {Case{{2, 3, 7, 6}, {4, 3, 3, 3}, 1}, Case{{1, 2, 9, 9}, {3, 2, 3, 3}, 2},
                        Case{{2, 5, 4, 3}, {6, 5, 1, 1}, 1}, Case{{1, 1, 5, 5}, {1, 1, 5, 5}, 1}}) {
    const auto x = oracle::normal<double>(c.x, rng);
    const auto k = oracle::normal<double>(c.k, rng);
    const auto b = oracle::normal<double>(Shape{c.k.n()}, rng);
    const auto got = kernels::conv2d(x, k, b, c.stride);
    const auto want = oracle::conv2d(x, k, &b, c.stride);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.numel(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("depthwise conv is a per-channel conv") {
  std::mt19937_64 rng(2);
  const auto x = oracle::normal<double>(Shape{1, 3, 5, 6}, rng);
  const auto k = oracle::normal<double>(Shape{3, 1, 3, 3}, rng);
  const auto got = kernels::depthwise_conv2d(x, k);
  for (std::size_t c = 0; c < 3; ++c) {
    TensorD xc(Shape{1, 1, 5, 6}), kc(Shape{1, 1, 3, 3});
    for (std::size_t i = 0; i < 30; ++i) xc[i] = x[c * 30 + i];
    for (std::size_t i = 0; i < 9; ++i) kc[i] = k[c * 9 + i];
    const auto want = oracle::conv2d(xc, kc, nullptr, 1);
    for (std::size_t i = 0; i < want.numel(); ++i)
      CHECK(got[c * want.numel() + i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul with transposes matches naive product") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 4; ++t) {
    const bool ta = t & 1, tb = t & 2;
    const auto a = oracle::normal<double>(ta ? Shape{2, 4, 3} : Shape{2, 3, 4}, rng);
    const auto b = oracle::normal<double>(tb ? Shape{2, 5, 4} : Shape{2, 4, 5}, rng);
    const auto y = kernels::matmul(a, b, ta, tb);
    REQUIRE(y.shape() == Shape{2, 3, 5});
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
          double acc = 0;
          for (std::size_t k = 0; k < 4; ++k)
            acc += (ta ? a[n * 12 + k * 3 + i] : a[n * 12 + i * 4 + k]) * (tb ? b[n * 20 + j * 4 + k] : b[n * 20 + k * 5 + j]);
          CHECK(y[n * 15 + i * 5 + j] == doctest::Approx(acc).epsilon(1e-12));
        }
  }
}

TEST_CASE("broadcast multiply and its reduction") {
  const TensorD a(Shape{1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  const TensorD b(Shape{1, 2, 1, 1}, {10, -1});
  const auto y = kernels::broadcast_binary(a, b, kernels::BinaryKind::mul);
  CHECK(y[0] == 10);
  CHECK(y[3] == 40);
  CHECK(y[4] == -5);
  const auto r = kernels::reduce_to_shape(a, Shape{1, 2, 1, 1});
  CHECK(r[0] == 10);
  CHECK(r[1] == 26);
  CHECK_THROWS_AS(kernels::broadcast_shape(Shape{1, 2, 3, 3}, Shape{1, 3, 1, 1}), ShapeError);
  try {
    kernels::broadcast_shape(Shape{1, 2, 3, 3}, Shape{1, 3, 1, 1});
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("(1,3,1,1)") != std::string::npos);
  }
}

TEST_CASE("softmax rows") {
  const TensorD x(Shape{2, 3}, {1, 2, 3, 1000, 1000, 1000});
  const auto y = kernels::softmax_rows(x);
  const double e = std::exp(1.0);
  const double z = 1 + e + e * e;
  CHECK(y[0] == doctest::Approx(1 / z));
  CHECK(y[2] == doctest::Approx(e * e / z));
  for (std::size_t i = 3; i < 6; ++i) CHECK(y[i] == doctest::Approx(1.0 / 3));
  TensorD inplace = x;
  kernels::softmax_rows_inplace(inplace);
  for (std::size_t i = 0; i < 6; ++i) CHECK(inplace[i] == doctest::Approx(y[i]).epsilon(1e-15));
}

TEST_CASE("softmax over channels sums to one per pixel") {
  std::mt19937_64 rng(4);
  const auto x = oracle::normal<double>(Shape{2, 5, 3, 3}, rng, 3.0);
  const auto y = kernels::softmax_channels(x);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t p = 0; p < 9; ++p) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += y[(n * 5 + c) * 9 + p];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("reflect and zero padding") {
  const TensorD x(Shape{1, 1, 1, 3}, {1, 2, 3});
  CHECK_THROWS_AS(kernels::pad2d(x, 1, kernels::PadMode::reflect), ShapeError);  // p must be < min(H, W)
  const TensorD sq(Shape{1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  const auto r = kernels::pad2d(sq, 1, kernels::PadMode::reflect);
  REQUIRE(r.shape() == Shape{1, 1, 4, 5});
  const std::vector<double> want{5, 4, 5, 6, 5, 2, 1, 2, 3, 2, 5, 4, 5, 6, 5, 2, 1, 2, 3, 2};
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(r[i] == want[i]);
  const auto z = kernels::pad2d(sq, 1, kernels::PadMode::zero);
  CHECK(z[0] == 0);
  CHECK(z[6] == 1);
}

TEST_CASE("upsample and 2x2 pools") {
  const TensorD x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  const auto u = kernels::upsample_nearest2x(x);
  REQUIRE(u.shape() == Shape{1, 1, 4, 4});
  CHECK(u[0] == 1);
  CHECK(u[1] == 1);
  CHECK(u[5] == 1);
  CHECK(u[15] == 4);
  CHECK(kernels::avg_pool2x2(u)[3] == 4);
  CHECK(kernels::max_pool2x2(x)[0] == 4);
  CHECK(kernels::avg_pool2x2(x)[0] == 2.5);
  CHECK_THROWS_AS(kernels::avg_pool2x2(TensorD(Shape{1, 1, 3, 2})), ShapeError);
  CHECK(kernels::pool_global(x, kernels::PoolKind::max)[0] == 4);
  CHECK(kernels::pool_global(x, kernels::PoolKind::avg)[0] == 2.5);
}

TEST_CASE("channel norm gives zero mean and unit variance") {
  std::mt19937_64 rng(5);
  auto x = oracle::normal<double>(Shape{2, 3, 4, 4}, rng, 2.0);
  for (auto& v : x.data()) v += 7;
  const auto y = kernels::channel_norm(x, 0.0);
  for (std::size_t nc = 0; nc < 6; ++nc) {
    std::vector<double> ch(y.data().begin() + nc * 16, y.data().begin() + (nc + 1) * 16);
    const auto m = oracle::stats_oracle(ch, 0.0);
    CHECK(std::abs(m.mean) < 1e-12);
    CHECK(m.std == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("channel norm ignores positive affine maps") {
  std::mt19937_64 rng(9);
  const auto x = oracle::normal<double>(Shape{1, 2, 4, 4}, rng);
  TensorD y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = 3.0 * x[i] - 2.0;
  const auto a = kernels::channel_norm(x, 1e-5), b = kernels::channel_norm(y, 1e-5);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-4);
  // [1, 2, 3, 4] in the eps -> 0 limit.
  const auto z = kernels::channel_norm(TensorD(Shape{1, 1, 1, 4}, {1, 2, 3, 4}), 1e-12);
  double m = 0, v = 0;
  for (std::size_t i = 0; i < 4; ++i) m += z[i] / 4;
  for (std::size_t i = 0; i < 4; ++i) v += (z[i] - m) * (z[i] - m) / 4;
  CHECK(std::abs(m) <= 1e-6);
  CHECK(std::abs(v - 1) <= 1e-6);
}

TEST_CASE("shape and tensor errors") {
  CHECK_THROWS_AS(Shape({1, 0}), ShapeError);
  CHECK_THROWS_AS(Shape({1, 1, 1, 1, 1}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, {1.f, 2.f, 3.f}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 3}).reshaped(Shape{5}), ShapeError);
  CHECK(Shape{1, 2, 3, 4}.str() == "(1,2,3,4)");
  CHECK(Tensor().empty());
}

TEST_CASE("batch concat and split round trip") {
  std::mt19937_64 rng(6);
  std::vector<Tensor> parts{oracle::normal(Shape{1, 2, 3, 3}, rng), oracle::normal(Shape{2, 2, 3, 3}, rng)};
  const auto all = concat_batch<float>(parts);
  REQUIRE(all.shape() == Shape{3, 2, 3, 3});
  const auto second = batch_item(all, 1);
  for (std::size_t i = 0; i < second.numel(); ++i) CHECK(second[i] == parts[1][i]);
  CHECK_THROWS_AS(concat_batch<float>(std::vector<Tensor>{Tensor(Shape{1, 2, 3, 3}), Tensor(Shape{1, 3, 3, 3})}),
                  ShapeError);
}

TEST_CASE("allocation scope sees tensor buffers") {
  memory::AllocationScope scope;
  {
    Tensor t(Shape{1, 64, 128, 128});
    CHECK(scope.live_bytes() >= 64 * 128 * 128 * 4);
  }
  CHECK(scope.peak_bytes() >= 4194304u);
  CHECK(scope.live_bytes() == 0);
  CHECK(scope.total_bytes() >= 4194304u);
}

}  // TEST_SUITE
