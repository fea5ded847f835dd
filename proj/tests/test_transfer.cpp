#include <doctest.h>

#include <cstring>
#include <random>

#include "hsi/profiler.hpp"
#include "support/oracles.hpp"

using namespace hsi;

namespace {

template <class T>
BasicVar<T> rand_var(const Shape& s, std::mt19937_64& g) {
  return BasicVar<T>(oracle::normal<T>(s, g));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.raw(), b.raw(), a.numel() * sizeof(float)) == 0;
}

}  // namespace

TEST_SUITE("transfer") {

TEST_CASE("attention map matches naive softmax of QK") {
  Rng rng(1);
  std::mt19937_64 g(2);
  const auto w = make_attn_weights<double>(4, rng);
  const auto c = rand_var<double>(Shape{2, 4, 3, 2}, g), s = rand_var<double>(Shape{2, 4, 2, 5}, g);
  const auto a = attention_map(c, s, w).value();
  REQUIRE(a.shape() == Shape{2, 6, 10});
  const auto qkv = compute_qkv(c, s, w);
  for (std::size_t n = 0; n < 2; ++n) {
    const auto want = oracle::attention_rows(qkv.q.value(), qkv.k.value(), n);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 10; ++j) CHECK(a[(n * 6 + i) * 10 + j] == doctest::Approx(want[i][j]).epsilon(1e-12));
  }
}

TEST_CASE("attention rows sum to one") {
  Rng rng(3);
  std::mt19937_64 g(4);
  for (int t = 0; t < 10; ++t) {
    const auto w = make_attn_weights<float>(8, rng);
    const auto a = attention_map(rand_var<float>(Shape{1, 8, 4, 4}, g), rand_var<float>(Shape{1, 8, 4, 6}, g), w).value();
    for (std::size_t i = 0; i < 16; ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < 24; ++j) sum += a[i * 24 + j];
      CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("tiled attention equals the materialized map") {
  Rng rng(5);
  std::mt19937_64 g(6);
  const auto w = make_attn_weights<float>(8, rng);
  const auto c = rand_var<float>(Shape{1, 8, 6, 5}, g), s = rand_var<float>(Shape{1, 8, 4, 4}, g);
  const auto full = self_attention_forward(c, s, w, 0).value();
  for (std::size_t tile : {1, 7, 30, 64}) {
    const auto tiled = self_attention_forward(c, s, w, tile).value();
    for (std::size_t i = 0; i < full.numel(); ++i) CHECK(tiled[i] == doctest::Approx(full[i]).epsilon(1e-5));
  }
}

TEST_CASE("zero output projection returns the content features") {
  Rng rng(7);
  std::mt19937_64 g(8);
  auto hw = make_hsi_weights<float>(8, rng);
  hw.f_o = make_conv_zero<float>(ConvKind::pointwise_1x1, 8, 8);
  auto aw = make_attn_weights<float>(8, rng);
  aw.f_o = make_conv_zero<float>(ConvKind::pointwise_1x1, 8, 8);
  const auto c = rand_var<float>(Shape{1, 8, 4, 4}, g), s = rand_var<float>(Shape{1, 8, 6, 6}, g);
  for (RelationMode m : {RelationMode::local_only, RelationMode::global_only, RelationMode::dual}) {
    HsiConfig cfg;
    cfg.relation = m;
    CHECK(bitwise_equal(hsi_forward(c, s, hw, cfg).value(), c.value()));
  }
  CHECK(bitwise_equal(self_attention_forward(c, s, aw).value(), c.value()));
  CHECK(bitwise_equal(self_attention_forward(c, s, aw, 5).value(), c.value()));
}

TEST_CASE("relation coefficient from pooled descriptors") {
  const auto pooled = [](std::vector<double> v) {
    // A constant map pools to itself.
    TensorD t(Shape{1, v.size(), 2, 2});
    for (std::size_t c = 0; c < v.size(); ++c)
      for (std::size_t i = 0; i < 4; ++i) t[c * 4 + i] = v[c];
    return VarD(t);
  };
  const auto lam = [&](std::vector<double> a, std::vector<double> b) {
    return relation_lambda(pooled(a), pooled(b), RelationMode::dual).value()[0];
  };
  CHECK(lam({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lam({1, 0, 0}, {0, 1, 0}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(lam({1, 2, 3}, {-1, -2, -3}) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(lam({0, 0, 0}, {1, 2, 3}) == 0.5);
  CHECK(relation_lambda(pooled({1, 2}), pooled({3, 4}), RelationMode::local_only).value()[0] == 0.0);
  CHECK(relation_lambda(pooled({1, 2}), pooled({3, 4}), RelationMode::global_only).value()[0] == 1.0);
}

TEST_CASE("relation coefficient is bounded and scale invariant") {
  std::mt19937_64 g(9);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int t = 0; t < 200; ++t) {
    const auto q = rand_var<double>(Shape{1, 5, 3, 3}, g), k = rand_var<double>(Shape{1, 5, 2, 4}, g);
    const double l = relation_lambda(q, k, RelationMode::dual).value()[0];
    CHECK(l >= 0.0);
    CHECK(l <= 1.0);
    const double a = scale(g), b = scale(g);
    const double ls = relation_lambda(affine(q, a), affine(k, b), RelationMode::dual).value()[0];
    CHECK(std::abs(ls - l) <= 1e-6);
  }
}

TEST_CASE("fuse endpoints") {
  std::mt19937_64 g(10);
  const auto q = rand_var<double>(Shape{1, 3, 2, 2}, g);
  const auto k_s = rand_var<double>(Shape{1, 3, 1, 1}, g);
  const auto q_c = kernels::pool_global(q.value(), kernels::PoolKind::avg);
  const auto local = dual_relation_fuse(q, k_s, VarD(TensorD(Shape{1, 1, 1, 1}, 0.0))).value();
  const auto global = dual_relation_fuse(q, k_s, VarD(TensorD(Shape{1, 1, 1, 1}, 1.0))).value();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(local[c * 4 + i] == doctest::Approx(q.value()[c * 4 + i] * k_s.value()[c]));
      CHECK(global[c * 4 + i] == doctest::Approx(q_c[c] * k_s.value()[c]));
    }
}

TEST_CASE("relation modes change the output") {
  Rng rng(11);
  std::mt19937_64 g(12);
  const auto w = make_hsi_weights<float>(6, rng);
  const auto c = rand_var<float>(Shape{1, 6, 4, 4}, g), s = rand_var<float>(Shape{1, 6, 4, 4}, g);
  std::vector<Tensor> outs;
  for (RelationMode m : {RelationMode::local_only, RelationMode::global_only, RelationMode::dual}) {
    HsiConfig cfg;
    cfg.relation = m;
    outs.push_back(hsi_forward(c, s, w, cfg).value());
    CHECK(outs.back().shape() == c.shape());
  }
  CHECK_FALSE(bitwise_equal(outs[0], outs[1]));
  CHECK_FALSE(bitwise_equal(outs[0], outs[2]));
  CHECK_FALSE(bitwise_equal(outs[1], outs[2]));
}

TEST_CASE("global-only output is constant over content positions when weights are pointwise") {
  // A = softmax(Q_c * K_s) carries no position; with V_s pooled too, f_o(A V_s)
  // is the same at every pixel.
  Rng rng(13);
  std::mt19937_64 g(14);
  const auto w = make_hsi_weights<double>(4, rng);
  const auto c = rand_var<double>(Shape{1, 4, 3, 3}, g), s = rand_var<double>(Shape{1, 4, 3, 3}, g);
  HsiConfig cfg;
  cfg.relation = RelationMode::global_only;
  const auto y = (hsi_forward(c, s, w, cfg) - c).value();
  for (std::size_t ch = 0; ch < 4; ++ch)
    for (std::size_t i = 1; i < 9; ++i) CHECK(y[ch * 9 + i] == doctest::Approx(y[ch * 9]).epsilon(1e-12));
}

TEST_CASE("configuration errors") {
  HsiConfig cfg;
  cfg.stats = StatMask{};
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = HsiConfig{};
  cfg.blocks = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  Rng rng(15);
  const auto w = make_hsi_weights<float>(4, rng);
  CHECK_THROWS_AS(hsi_forward(Var(Tensor(Shape{1, 3, 4, 4})), Var(Tensor(Shape{1, 3, 4, 4})), w, HsiConfig{}),
                  ShapeError);
  CHECK_THROWS_AS(hsi_chain<float>(Var(Tensor(Shape{1, 4, 4, 4})), Var(Tensor(Shape{1, 4, 4, 4})), {}, HsiConfig{}),
                  ArgumentError);
}

TEST_CASE("pairwise MACs at 64 positions and 8 channels") {
  const auto mac = count_macs(Module::attention, 8, 8, 8);
  CHECK(mac.pairwise == 2 * 32768u);
  Rng rng(16);
  std::mt19937_64 g(17);
  const auto w = make_attn_weights<float>(8, rng);
  const auto c = rand_var<float>(Shape{1, 8, 8, 8}, g), s = rand_var<float>(Shape{1, 8, 8, 8}, g);
  const auto measured = measure_macs([&] { self_attention_forward(c, s, w); });
  CHECK(measured.pairwise == 65536u);
}

}  // TEST_SUITE
