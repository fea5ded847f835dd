#include "hsi/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "hsi/gradcheck.hpp"
#include "hsi/image_io.hpp"
#include "hsi/profiler.hpp"
#include "hsi/train.hpp"
#include "hsi/weights_io.hpp"

namespace hsi {

namespace {

std::size_t parse_positive(std::string_view s, std::string_view what) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || v == 0)
    throw ArgumentError("invalid " + std::string(what) + " '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i)
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  return out;
}

}  // namespace

StatMask parse_stat_list(std::string_view s) {
  StatMask mask{};
  for (std::string_view item : split(s, ',')) {
    const auto it = std::find(kStatNames.begin(), kStatNames.end(), item);
    if (it == kStatNames.end())
      throw ArgumentError("unknown statistic '" + std::string(item) + "' (expected mean, std, skew or kurt)");
    const std::size_t i = static_cast<std::size_t>(it - kStatNames.begin());
    if (mask[i]) throw ArgumentError("statistic '" + std::string(item) + "' listed twice");
    mask[i] = true;
  }
  return mask;
}

RelationMode parse_relation(std::string_view s) {
  if (s == "local") return RelationMode::local_only;
  if (s == "global") return RelationMode::global_only;
  if (s == "dual") return RelationMode::dual;
  throw ArgumentError("unknown relation mode '" + std::string(s) + "' (expected local, global or dual)");
}

Arch parse_arch(std::string_view s) {
  if (s == "mini") return Arch::mini;
  if (s == "vgg19") return Arch::vgg19;
  throw ArgumentError("unknown architecture '" + std::string(s) + "' (expected mini or vgg19)");
}

std::pair<std::size_t, std::size_t> parse_size_spec(std::string_view s) {
  const auto x = s.find('x');
  if (x == std::string_view::npos) {
    const std::size_t v = parse_positive(s, "size");
    return {v, v};
  }
  return {parse_positive(s.substr(0, x), "size"), parse_positive(s.substr(x + 1), "size")};
}

std::vector<std::size_t> parse_size_list(std::string_view s) {
  std::vector<std::size_t> out;
  for (std::string_view item : split(s, ',')) out.push_back(parse_positive(item, "size"));
  return out;
}

Tensor apply_size_policy(const Tensor& image, std::pair<std::size_t, std::size_t> size) {
  if (size.first == 0 && size.second == 0) return crop_to_multiple_of_8(image);
  return crop_to_multiple_of_8(resize_bilinear(image, size.first, size.second));
}

namespace {

struct StylizeArgs {
  std::string content, style, out, weights, stats = "mean,std,skew,kurt", relation = "dual", size, arch = "mini";
  std::size_t blocks = 2;
  std::uint64_t seed = 42;
};

int stylize_cmd(const StylizeArgs& a) {
  HsiConfig cfg;
  cfg.stats = parse_stat_list(a.stats);
  cfg.relation = parse_relation(a.relation);
  cfg.blocks = a.blocks;
  cfg.validate();
  const Arch arch = parse_arch(a.arch);
  const auto size = a.size.empty() ? std::pair<std::size_t, std::size_t>{0, 0} : parse_size_spec(a.size);

  const Tensor content = apply_size_policy(read_png(a.content), size);
  const Tensor style = apply_size_policy(read_png(a.style), size);
  Model model = make_model<float>(arch, cfg.blocks, a.seed);
  if (!a.weights.empty()) assign_weights(model, read_weights(a.weights));
  const Var out = stylize(Var(content), Var(style), model, cfg);
  write_png(a.out, out.value());
  return 0;
}

struct BenchArgs {
  std::string module = "both", sizes, out;
  std::size_t channels = 16, tile_rows = 256;
  std::uint64_t seed = 42, cap = 0;
  int runs = 5;
  bool slopes = false;
};

int bench_cmd(const BenchArgs& a, std::ostream& out) {
  std::vector<Module> modules;
  if (a.module == "both") modules = {Module::hsi, Module::attention};
  else modules = {parse_module(a.module)};
  const auto sizes = parse_size_list(a.sizes);
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) throw ArgumentError("--sizes must be strictly ascending");
  if (a.slopes && sizes.size() < 3)
    throw ArgumentError("slopes need at least 3 sizes, got " + std::to_string(sizes.size()));
  if (a.runs < 1) throw ArgumentError("--runs must be at least 1");

  BenchOptions opt;
  opt.channels = a.channels;
  opt.seed = a.seed;
  opt.runs = a.runs;
  opt.tile_rows = a.tile_rows;
  const ComplexityReport rep = run_bench(modules, sizes, opt);
  emit_report(rep, a.out);

  if (sizes.size() >= 3) {
    out << "module slope_macs slope_bytes\n";
    for (Module m : modules) {
      const Slopes s = fit_slopes(rep, module_name(m));
      char line[96];
      std::snprintf(line, sizeof line, "%s %.4f %.4f\n", std::string(module_name(m)).c_str(), s.macs, s.bytes);
      out << line;
    }
  }
  if (a.cap > 0) {
    for (Module m : modules) {
      const CapReport cr = simulate_memory_cap(m, sizes, a.channels, a.cap, opt.cfg);
      for (const auto& r : cr.results)
        out << "cap " << module_name(m) << ' ' << r.size << ' '
            << (r.status == CapStatus::ok ? "ok" : "exceeds_cap") << ' ' << r.bytes << '\n';
    }
  }
  return 0;
}

int gradcheck_cmd(std::uint64_t seed, double tol, std::ostream& out) {
  if (!(tol > 0)) throw ArgumentError("--tol must be positive");
  const auto rows = gradient_suite(seed, tol);
  bool all = true;
  char line[128];
  std::snprintf(line, sizeof line, "%-28s %14s %6s %s\n", "check", "max_rel_error", "coords", "result");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-28s %14.3e %6zu %s\n", r.name.c_str(), r.report.max_rel_error,
                  r.report.coordinates, r.report.pass ? "pass" : "FAIL");
    out << line;
    all = all && r.report.pass;
  }
  return all ? 0 : 1;
}

int stats_cmd(const std::string& path, std::ostream& out) {
  const TensorD img = read_png(path).cast<double>();
  const auto st = channel_statistics(VarD(img), 1e-8);
  out << "channel mean std skew kurt\n";
  constexpr std::array<char, 3> names{'R', 'G', 'B'};
  for (std::size_t c = 0; c < 3; ++c) {
    out << names[c];
    for (std::size_t k = 0; k < kNumStats; ++k) {
      double v = st.values[k].value()[c];
      if (std::abs(v) < 5e-7) v = 0.0;  // no "-0.000000"
      char buf[32];
      std::snprintf(buf, sizeof buf, " %.6f", v);
      out << buf;
    }
    out << '\n';
  }
  return 0;
}

struct TrainArgs {
  std::string content, style, out, arch = "mini";
  std::size_t iters = 0, batch = 4, blocks = 2;
  double lr = 1e-4;
  bool no_adv = false;
  std::uint64_t seed = 42;
};

int train_cmd(const TrainArgs& a, std::ostream& out) {
  TrainConfig cfg;
  cfg.iters = a.iters;
  cfg.batch = a.batch;
  cfg.adversarial = !a.no_adv;
  cfg.seed = a.seed;
  cfg.arch = parse_arch(a.arch);
  cfg.hsi.blocks = a.blocks;
  cfg.adam.lr = a.lr;
  if (!(a.lr > 0)) throw ArgumentError("--lr must be positive");
  if (a.batch == 0) throw ArgumentError("--batch must be at least 1");
  constexpr std::size_t kSide = 64;
  const auto content = load_square_images(list_png_files(a.content), kSide);
  const auto style = load_square_images(list_png_files(a.style), kSide);
  out << kLossLogHeader << '\n';
  TrainResult res = train_toy(content, style, cfg, [&](const LossRow& r) { out << format_loss_row(r) << '\n'; });
  if (!a.out.empty()) write_weights(a.out, collect_weights(res.model));
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Style transfer with holistic style injection", "hsi"};
  app.require_subcommand(1);

  StylizeArgs sa;
  auto* st = app.add_subcommand("stylize", "Stylize a content image with a style image");
  st->add_option("--content", sa.content, "content PNG")->required();
  st->add_option("--style", sa.style, "style PNG")->required();
  st->add_option("--out", sa.out, "output PNG")->required();
  st->add_option("--weights", sa.weights, "HSIW weight file; seeded random weights otherwise");
  st->add_option("--stats", sa.stats, "statistics to inject, comma separated");
  st->add_option("--relation", sa.relation, "local, global or dual");
  st->add_option("--blocks", sa.blocks, "number of HSI blocks");
  st->add_option("--size", sa.size, "resize both images to HxW first");
  st->add_option("--seed", sa.seed, "weight initialization seed");
  st->add_option("--arch", sa.arch, "mini or vgg19");

  BenchArgs ba;
  auto* be = app.add_subcommand("bench", "Measure MACs, buffer bytes and time per resolution");
  be->add_option("--module", ba.module, "hsi, attention or both");
  be->add_option("--sizes", ba.sizes, "feature map sides, comma separated, ascending")->required();
  be->add_option("--channels", ba.channels, "feature channels");
  be->add_option("--out", ba.out, "CSV report path")->required();
  be->add_option("--cap", ba.cap, "memory cap in bytes to check each size against");
  be->add_option("--seed", ba.seed, "input and weight seed");
  be->add_option("--runs", ba.runs, "timed runs per size");
  be->add_option("--tile-rows", ba.tile_rows, "attention rows per tile when timing");
  be->add_flag("--slopes", ba.slopes, "require fitted slopes (needs 3 sizes)");

  std::uint64_t gc_seed = 42;
  double gc_tol = 1e-3;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  gc->add_option("--seed", gc_seed, "input seed");
  gc->add_option("--tol", gc_tol, "relative error tolerance");

  std::string stats_input;
  auto* ss = app.add_subcommand("stats", "Per-channel mean, std, skewness and kurtosis of a PNG");
  ss->add_option("--input", stats_input, "PNG path")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train-toy", "Train the mini network on small image folders");
  tr->add_option("--content", ta.content, "folder of content PNGs")->required();
  tr->add_option("--style", ta.style, "folder of style PNGs")->required();
  tr->add_option("--iters", ta.iters, "Adam steps")->required();
  tr->add_option("--lr", ta.lr, "learning rate");
  tr->add_option("--batch", ta.batch, "batch size");
  tr->add_flag("--no-adv", ta.no_adv, "drop the adversarial term");
  tr->add_option("--seed", ta.seed, "initialization seed");
  tr->add_option("--out", ta.out, "HSIW file for the trained weights");
  tr->add_option("--blocks", ta.blocks, "number of HSI blocks");
  tr->add_option("--arch", ta.arch, "mini or vgg19");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "hsi: " << e.what() << '\n';
    return 2;
  }

  try {
    if (st->parsed()) return stylize_cmd(sa);
    if (be->parsed()) return bench_cmd(ba, out);
    if (gc->parsed()) return gradcheck_cmd(gc_seed, gc_tol, out);
    if (ss->parsed()) return stats_cmd(stats_input, out);
    if (tr->parsed()) return train_cmd(ta, out);
  } catch (const Error& e) {
    err << "hsi: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "hsi: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace hsi
