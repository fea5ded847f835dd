#include <doctest.h>

#include <set>

#include "hsi/network.hpp"
#include "hsi/weights_io.hpp"
#include "support/oracles.hpp"

using namespace hsi;

TEST_SUITE("network") {

TEST_CASE("mini encoder and decoder shapes") {
  const Model m = make_model<float>(Arch::mini, 2, 1);
  const Var img(oracle::pattern_image(32, 24, 0));
  const auto taps = encode(img, m.encoder);
  CHECK(taps[0].shape() == Shape{1, 16, 32, 24});
  CHECK(taps[1].shape() == Shape{1, 32, 16, 12});
  CHECK(taps[2].shape() == Shape{1, 64, 8, 6});
  CHECK(taps[3].shape() == Shape{1, 128, 4, 3});
  CHECK(encode_last(img, m.encoder).shape() == taps[3].shape());
  const auto out = decode(taps[3], m.decoder).value();
  CHECK(out.shape() == img.shape());
  for (float v : out.data()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("vgg19 taps") {
  Rng rng(2);
  const auto enc = make_encoder<float>(Arch::vgg19, rng);
  const auto taps = encode(Var(oracle::pattern_image(16, 16, 1)), enc);
  CHECK(taps[0].shape() == Shape{1, 64, 16, 16});
  CHECK(taps[3].shape() == Shape{1, 512, 2, 2});
  CHECK(feature_channels(Arch::vgg19) == 512);
}

TEST_CASE("stylize keeps the content size") {
  const Model m = make_model<float>(Arch::mini, 2, 3);
  const Var c(oracle::pattern_image(24, 40, 0)), s(oracle::noise_image(32, 32, 4));
  const auto out = stylize(c, s, m, HsiConfig{});
  CHECK(out.shape() == c.shape());
  const auto again = stylize(c, s, m, HsiConfig{});
  for (std::size_t i = 0; i < out.value().numel(); ++i) CHECK(out.value()[i] == again.value()[i]);
}

TEST_CASE("input errors") {
  const Model m = make_model<float>(Arch::mini, 1, 5);
  CHECK_THROWS_AS(encode(Var(Tensor(Shape{1, 3, 20, 16})), m.encoder), ShapeError);
  CHECK_THROWS_AS(encode(Var(Tensor(Shape{1, 4, 16, 16})), m.encoder), ShapeError);
  CHECK_THROWS_AS(decode(Var(Tensor(Shape{1, 64, 2, 2})), m.decoder), ShapeError);
  HsiConfig cfg;
  cfg.blocks = 2;
  CHECK_THROWS_AS(stylize(Var(oracle::pattern_image(16, 16, 0)), Var(oracle::pattern_image(16, 16, 1)), m, cfg),
                  ArgumentError);
  CHECK_THROWS_AS(make_model<float>(Arch::mini, 0, 1), ArgumentError);
}

TEST_CASE("grayscale weights") {
  Tensor px(Shape{1, 3, 1, 1}, {1.0f, 0.0f, 0.0f});
  const auto g = grayscale(Var(px)).value();
  for (std::size_t c = 0; c < 3; ++c) CHECK(g[c] == doctest::Approx(0.299));
}

TEST_CASE("parameter names are unique and seeded weights reproduce") {
  Model a = make_model<float>(Arch::mini, 2, 7), b = make_model<float>(Arch::mini, 2, 7),
        c = make_model<float>(Arch::mini, 2, 8);
  const auto sa = collect_weights(a), sb = collect_weights(b), sc = collect_weights(c);
  std::set<std::string> names;
  for (const auto& t : sa) CHECK(names.insert(t.name).second);
  CHECK(names.contains("encoder.stage1.conv1.kernel"));
  CHECK(names.contains("hsi.block2.dyn_b.kurt.depth"));
  CHECK(names.contains("decoder.stage4.conv1.bias"));
  REQUIRE(sa.size() == sb.size());
  bool differs = false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    for (std::size_t j = 0; j < sa[i].value.numel(); ++j) {
      CHECK(sa[i].value[j] == sb[i].value[j]);
      differs = differs || sa[i].value[j] != sc[i].value[j];
    }
  }
  CHECK(differs);
}

}  // TEST_SUITE

TEST_SUITE("weights_io") {

namespace {
WeightStore small_store() {
  return {{"a.kernel", Tensor(Shape{2, 1, 1, 1}, {1.5f, -2.0f})}, {"a.bias", Tensor(Shape{2}, {0.25f, 3.0f})}};
}
}  // namespace

TEST_CASE("layout of a small file") {
  const auto bytes = serialize_weights(small_store());
  REQUIRE(bytes.size() == 12 + (4 + 8 + 4 + 16 + 8) + (4 + 6 + 4 + 4 + 8));
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "HSIW");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 2);
}

TEST_CASE("model round trip is byte identical") {
  oracle::TempDir dir("w");
  Model m = make_model<float>(Arch::mini, 2, 9);
  const auto store = collect_weights(m);
  write_weights(dir.file("m.hsiw"), store);
  const auto back = read_weights(dir.file("m.hsiw"));
  CHECK(serialize_weights(back) == serialize_weights(store));
  Model other = make_model<float>(Arch::mini, 2, 10);
  assign_weights(other, back);
  CHECK(serialize_weights(collect_weights(other)) == serialize_weights(store));
}

TEST_CASE("malformed files") {
  auto bytes = serialize_weights(small_store());
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(parse_weights(bad), "not a weight file (bad magic)", FormatError);
  bad = bytes;
  bad[4] = 2;
  CHECK_THROWS_WITH_AS(parse_weights(bad), "unsupported weight file version 2", FormatError);
  for (std::size_t cut : {std::size_t(10), std::size_t(20), bytes.size() - 1}) {
    const std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + cut);
    CHECK_THROWS_AS(parse_weights(t), FormatError);
    try {
      parse_weights(t);
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("truncated at byte offset") != std::string::npos);
    }
  }
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(parse_weights(bad), FormatError);
  WeightStore dup = small_store();
  dup[1].name = "a.kernel";
  CHECK_THROWS_WITH_AS(parse_weights(serialize_weights(dup)), "duplicate tensor name 'a.kernel' in weight file",
                       FormatError);
  CHECK_THROWS_AS(read_weights("/nonexistent/w.hsiw"), IoError);
}

TEST_CASE("schema check names every offender") {
  const WeightStore want = small_store();
  WeightStore got = small_store();
  got[0].value = Tensor(Shape{3, 1, 1, 1});
  got.push_back({"extra", Tensor(Shape{1})});
  got.erase(got.begin() + 1);
  try {
    check_schema(want, got);
    FAIL("expected a schema error");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("unknown tensors: extra") != std::string::npos);
    CHECK(msg.find("missing tensors: a.bias") != std::string::npos);
    CHECK(msg.find("a.kernel (3,1,1,1) expected (2,1,1,1)") != std::string::npos);
  }
}

}  // TEST_SUITE
