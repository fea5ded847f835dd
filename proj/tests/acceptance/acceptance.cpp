// One pass/fail line per acceptance criterion. Exit status is the number of
// failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "hsi/cli.hpp"
#include "hsi/gradcheck.hpp"
#include "hsi/profiler.hpp"
#include "hsi/train.hpp"
#include "hsi/weights_io.hpp"
#include "support/oracles.hpp"

using namespace hsi;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-12); }

Outcome stats_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 g(2024);
  std::uniform_int_distribution<std::size_t> cd(1, 8), hd(1, 16);
  std::exponential_distribution<double> ex(1.0);
  std::size_t channels = 0;
  double worst = 0;
  while (channels < 1000) {
    const std::size_t c = std::min<std::size_t>(cd(g), 1000 - channels);
    const Shape s{1, c, hd(g), hd(g)};
    TensorD x = oracle::normal<double>(s, g, 2.0);
    for (auto& v : x.data()) v += ex(g);  // skewed
    const auto st = channel_statistics(VarD(x), kernels::kDefaultEps);
    for (std::size_t k = 0; k < c; ++k) {
      const auto m = oracle::stats_oracle(oracle::channel(x, 0, k), kernels::kDefaultEps);
      const double want[4] = {m.mean, m.std, m.skew, m.kurt};
      for (std::size_t i = 0; i < 4; ++i) {
        // Single-pixel channels have exactly zero higher moments.
        const double got = st.values[i].value()[k];
        const double e = want[i] == 0.0 ? std::abs(got) : rel_err(got, want[i]);
        worst = std::max(worst, e);
      }
    }
    channels += c;
  }
  const double secs = since(t0);
  return {worst <= 1e-5 && secs < 10, fmt("%zu channels, max rel error %.3g (<= 1e-5), %.3f s (< 10 s)", channels, worst, secs)};
}

Outcome moment_sanity() {
  std::mt19937_64 g(7);
  const auto x = oracle::normal<double>(Shape{1, 1, 1, 100000}, g);
  const auto st = channel_statistics(VarD(x), kernels::kDefaultEps);
  const double g1 = st.skew().value()[0], g2 = st.kurt().value()[0];
  const auto four = channel_statistics(VarD(TensorD(Shape{1, 1, 1, 4}, {1, 2, 3, 4})), 0.0);
  const double f1 = four.skew().value()[0], f2 = four.kurt().value()[0];
  const bool ok = std::abs(g1) < 0.1 && std::abs(g2 - 3) < 0.3 && f1 == 0.0 && std::abs(f2 - 1.64) <= 1e-6;
  return {ok, fmt("normal skew %.4f kurt %.4f; [1,2,3,4] skew %.3g kurt %.9f", g1, g2, f1, f2)};
}

Outcome gradient_suite_run() {
  const auto t0 = Clock::now();
  const auto rows = gradient_suite(42, 1e-3, 1e-3);
  const double secs = since(t0);
  std::string failed;
  double worst = 0;
  for (const auto& r : rows) {
    worst = std::max(worst, r.report.max_rel_error);
    if (!r.report.pass) failed += " " + r.name;
  }
  return {failed.empty() && secs < 60,
          fmt("%zu checks, worst rel error %.3g, %.3f s (< 60 s)%s%s", rows.size(), worst, secs,
              failed.empty() ? "" : ", failed:", failed.c_str())};
}

Outcome complexity() {
  const auto t0 = Clock::now();
  const std::vector<std::size_t> sizes{32, 64, 128, 256};
  constexpr std::size_t C = 16;
  std::vector<std::pair<double, double>> pair_pts, hsi_pts;
  for (std::size_t s : sizes) {
    pair_pts.push_back({double(s * s), double(count_macs(Module::attention, s, s, C).pairwise)});
    hsi_pts.push_back({double(s * s), double(count_macs(Module::hsi, s, s, C).total())});
  }
  const double slope_pair = scaling_fit(pair_pts), slope_hsi = scaling_fit(hsi_pts);

  const auto peak_ratio = [&](Module m) {
    const BenchCase a(m, 32, 32, C, 1), b(m, 64, 64, C, 1);
    return double(measure_peak_alloc([&] { b.run(); })) / double(measure_peak_alloc([&] { a.run(); }));
  };
  const double r_hsi = peak_ratio(Module::hsi), r_attn = peak_ratio(Module::attention);

  BenchOptions opt;
  opt.channels = C;
  opt.runs = 5;
  const std::vector<Module> mods{Module::hsi, Module::attention};
  const auto rep = run_bench(mods, sizes, opt);
  const auto wall = [&](std::string_view m) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rep.rows)
      if (r.module == m) pts.push_back({double(r.h * r.w), r.seconds});
    return scaling_fit(pts);
  };
  const double t_hsi = wall("hsi"), t_attn = wall("attention");
  const double secs = since(t0);
  const bool ok = std::abs(slope_pair - 2.0) <= 1e-3 && std::abs(slope_hsi - 1.0) <= 0.02 && r_hsi >= 3.5 &&
                  r_hsi <= 4.5 && r_attn >= 12 && r_attn <= 18 && t_attn >= 1.8 && t_hsi <= 1.3 && secs < 300;
  return {ok, fmt("MAC slopes pairwise %.4f hsi %.4f; peak x%.2f hsi x%.2f attention; time slopes attention %.3f hsi "
                  "%.3f; %.1f s (< 300 s)",
                  slope_pair, slope_hsi, r_hsi, r_attn, t_attn, t_hsi, secs)};
}

Outcome memory_cap() {
  // Image sides map to relu4_1 feature sides, an eighth as large.
  const std::vector<std::size_t> images{256, 512, 1024, 2048};
  std::vector<std::size_t> feats;
  for (std::size_t s : images) feats.push_back(s / 8);
  constexpr std::uint64_t cap = 2ull << 30;
  const auto attn = simulate_memory_cap(Module::attention, feats, 64, cap);
  const auto hsi = simulate_memory_cap(Module::hsi, feats, 64, cap);
  std::string row;
  for (std::size_t i = 0; i < images.size(); ++i)
    row += fmt(" %zu:%s/%s", images[i], attn.results[i].status == CapStatus::ok ? "ok" : "exceeds",
               hsi.results[i].status == CapStatus::ok ? "ok" : "exceeds");
  const bool ok = attn.first_failure.has_value() && hsi.results.back().status == CapStatus::ok;
  return {ok, "image side attention/hsi at 2 GiB, C=64:" + row};
}

Outcome residual_identities() {
  Rng rng(3);
  std::mt19937_64 g(4);
  auto hw = make_hsi_weights<float>(16, rng);
  hw.f_o = make_conv_zero<float>(ConvKind::pointwise_1x1, 16, 16);
  auto aw = make_attn_weights<float>(16, rng);
  aw.f_o = make_conv_zero<float>(ConvKind::pointwise_1x1, 16, 16);
  const Tensor c = oracle::normal(Shape{1, 16, 8, 8}, g), s = oracle::normal(Shape{1, 16, 6, 10}, g);
  const Tensor yh = hsi_forward(Var(c), Var(s), hw, HsiConfig{}).value();
  const Tensor ya = self_attention_forward(Var(c), Var(s), aw).value();
  const bool ident = std::memcmp(yh.raw(), c.raw(), c.numel() * 4) == 0 && std::memcmp(ya.raw(), c.raw(), c.numel() * 4) == 0;

  std::uniform_int_distribution<std::size_t> d(1, 12), ch(1, 16);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t C = ch(g);
    const auto w = make_attn_weights<float>(C, rng);
    const auto a = attention_map(Var(oracle::normal(Shape{1, C, d(g), d(g)}, g, 3.0)),
                                 Var(oracle::normal(Shape{1, C, d(g), d(g)}, g, 3.0)), w)
                       .value();
    const std::size_t P = a.shape()[1], S = a.shape()[2];
    for (std::size_t i = 0; i < P; ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < S; ++j) sum += a[i * S + j];
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  return {ident && worst <= 1e-6,
          fmt("zero f_o identity %s; max |row sum - 1| %.3g over 100 maps", ident ? "bitwise" : "BROKEN", worst)};
}

Outcome lambda_contract() {
  const auto constant_map = [](const std::vector<double>& v) {
    TensorD t(Shape{1, v.size(), 3, 3});
    for (std::size_t c = 0; c < v.size(); ++c)
      for (std::size_t i = 0; i < 9; ++i) t[c * 9 + i] = v[c];
    return VarD(t);
  };
  const auto lam = [&](const VarD& q, const VarD& k) { return relation_lambda(q, k, RelationMode::dual).value()[0]; };
  const double l_eq = lam(constant_map({1, -2, 3}), constant_map({1, -2, 3}));
  const double l_or = lam(constant_map({1, 1, 0}), constant_map({1, -1, 0}));
  const double l_an = lam(constant_map({1, -2, 3}), constant_map({-1, 2, -3}));
  const bool exact = std::abs(l_eq - 1) <= 1e-12 && std::abs(l_or - 0.5) <= 1e-12 && std::abs(l_an) <= 1e-12;

  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> sc(1e-3, 1e3);
  bool bounded = true;
  double drift = 0;
  for (int t = 0; t < 1000; ++t) {
    const VarD q(oracle::normal<double>(Shape{1, 8, 4, 4}, g)), k(oracle::normal<double>(Shape{1, 8, 3, 5}, g));
    const double l = lam(q, k);
    bounded = bounded && l >= 0 && l <= 1;
    drift = std::max({drift, std::abs(lam(affine(q, sc(g)), k) - l), std::abs(lam(q, affine(k, sc(g))) - l)});
  }
  return {exact && bounded && drift <= 1e-6,
          fmt("equal %.6f orthogonal %.6f antiparallel %.6f; bounded %s; scaling drift %.3g", l_eq, l_or, l_an,
              bounded ? "yes" : "NO", drift)};
}

int run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) throw std::runtime_error("cli exited " + std::to_string(code) + ": " + err.str());
  return code;
}

Outcome end_to_end() {
  oracle::TempDir dir("accept_e2e");
  write_png(dir.file("c.png"), oracle::pattern_image(64, 64, 0));
  write_png(dir.file("s.png"), oracle::noise_image(64, 64, 11));
  const auto stylize = [&](const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> a{"stylize", "--content", dir.file("c.png"), "--style", dir.file("s.png"), "--out",
                               dir.file(out)};
    a.insert(a.end(), extra.begin(), extra.end());
    run(a);
    return oracle::read_bytes(dir.file(out));
  };
  const auto t0 = Clock::now();
  const auto first = stylize("a.png", {});
  const double secs = since(t0);
  const auto second = stylize("b.png", {});
  const Shape shape = read_png(dir.file("a.png")).shape();
  const bool same = first == second;

  const auto local = stylize("l.png", {"--relation", "local"});
  const auto global = stylize("g.png", {"--relation", "global"});
  const auto dual = stylize("d.png", {"--relation", "dual"});
  const bool distinct = local != global && local != dual && global != dual;

  int mask_changes = 0;
  for (const char* s : {"mean", "std", "skew", "kurt"}) mask_changes += stylize(std::string(s) + ".png", {"--stats", s}) != dual;
  const bool ok = secs < 5 && shape == Shape{1, 3, 64, 64} && same && distinct && mask_changes == 4;
  return {ok, fmt("%.3f s (< 5 s), output %s, repeat %s, relations %s, single-stat masks differing %d/4", secs,
                  shape.str().c_str(), same ? "byte-identical" : "DIFFERS", distinct ? "pairwise distinct" : "NOT distinct",
                  mask_changes)};
}

Outcome toy_training() {
  oracle::TempDir dir("accept_train");
  std::filesystem::create_directories(dir.file("content"));
  std::filesystem::create_directories(dir.file("style"));
  for (int i = 0; i < 4; ++i) {
    write_png(dir.file("content/" + std::to_string(i) + ".png"), oracle::pattern_image(64, 64, i));
    write_png(dir.file("style/" + std::to_string(i) + ".png"), oracle::noise_image(64, 64, std::uint64_t(100 + i)));
  }
  const auto train = [&](bool adv) {
    std::vector<std::string> a{"train-toy", "--content", dir.file("content"), "--style", dir.file("style"), "--iters",
                               "200", "--seed", "42"};
    if (!adv) a.push_back("--no-adv");
    std::ostringstream out, err;
    if (run_cli(a, out, err) != 0) throw std::runtime_error("train-toy failed: " + err.str());
    return out.str();
  };
  const auto totals = [](const std::string& log) {
    std::vector<double> t;
    std::istringstream in(log);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto a = line.find(','), b = line.find(',', a + 1);
      t.push_back(std::stod(line.substr(a + 1, b - a - 1)));
    }
    return t;
  };
  const auto t0 = Clock::now();
  const std::string log = train(false);
  const double secs = since(t0);
  const bool deterministic = log == train(false);
  const auto t = totals(log);
  const double ratio = t.back() / t.front();

  const auto adv = totals(train(true));
  const bool finite = adv.size() == 200 && std::all_of(adv.begin(), adv.end(), [](double v) { return std::isfinite(v); });
  const bool ok = t.size() == 200 && ratio <= 0.8 && deterministic && secs < 300 && finite;
  return {ok, fmt("no-adv loss %.2f -> %.2f (x%.3f, <= 0.8), %s log, %.1f s; adversarial run %s", t.front(), t.back(),
                  ratio, deterministic ? "deterministic" : "NONDETERMINISTIC", secs,
                  finite ? "finite throughout" : "HIT NaN/Inf")};
}

Outcome serialization() {
  oracle::TempDir dir("accept_w");
  Model m = make_model<float>(Arch::mini, 2, 42);
  const auto store = collect_weights(m);
  write_weights(dir.file("a.hsiw"), store);
  write_weights(dir.file("b.hsiw"), read_weights(dir.file("a.hsiw")));
  const auto a = oracle::read_bytes(dir.file("a.hsiw")), b = oracle::read_bytes(dir.file("b.hsiw"));
  const bool same = a == b && !a.empty();

  std::vector<std::uint8_t> bad(a.begin(), a.end());
  bad[1] = 'Z';
  std::string magic_msg, trunc_msg;
  try {
    parse_weights(bad);
  } catch (const FormatError& e) {
    magic_msg = e.what();
  }
  try {
    parse_weights(std::vector<std::uint8_t>(a.begin(), a.begin() + std::ptrdiff_t(a.size() / 2)));
  } catch (const FormatError& e) {
    trunc_msg = e.what();
  }
  const bool ok = same && !magic_msg.empty() && trunc_msg.find("byte offset") != std::string::npos;
  return {ok, fmt("%zu bytes, round trip %s; bad magic: \"%s\"; truncated: \"%s\"", a.size(),
                  same ? "byte-identical" : "DIFFERS", magic_msg.c_str(), trunc_msg.c_str())};
}

}  // namespace

int main() {
  criterion("statistics oracle", stats_oracle);
  criterion("moment sanity", moment_sanity);
  criterion("gradient suite", gradient_suite_run);
  criterion("complexity", complexity);
  criterion("memory cap", memory_cap);
  criterion("residual identities", residual_identities);
  criterion("relation coefficient", lambda_contract);
  criterion("end to end", end_to_end);
  criterion("toy training", toy_training);
  criterion("serialization", serialization);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
