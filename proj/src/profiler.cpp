#include "hsi/profiler.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace hsi {

std::string_view module_name(Module m) noexcept { return m == Module::hsi ? "hsi" : "attention"; }

Module parse_module(std::string_view s) {
  if (s == "hsi") return Module::hsi;
  if (s == "attention") return Module::attention;
  throw ArgumentError("unknown module '" + std::string(s) + "'");
}

namespace {

// Mirrors the per-op cost rules of the dispatcher.
class Counter {
 public:
  void op(std::uint64_t hw, std::uint64_t macs, std::uint64_t adds = 0) {
    std::uint64_t& slot = hw == 1 ? count_.constant : count_.spatial;
    slot += macs;
    count_.adds += adds;
  }
  void pairwise(std::uint64_t macs) { count_.pairwise += macs; }
  const MacCount& count() const { return count_; }

 private:
  MacCount count_;
};

constexpr std::array<std::uint64_t, kNumStats> kMomentMacs{0, 1, 4, 5};

void count_descriptor(Counter& k, std::uint64_t s, std::uint64_t c, const HsiConfig& cfg) {
  std::uint64_t enabled = 0;
  for (std::size_t i = 0; i < kNumStats; ++i) {
    if (!cfg.stats[i]) continue;
    ++enabled;
    k.op(s, kMomentMacs[i] * s * c, s * c);  // statistic
    for (int path = 0; path < 2; ++path) {
      k.op(s, 9 * s * c);      // depthwise 3x3
      k.op(s, c * c * s);      // pointwise
    }
    k.op(s, 0, s * c);          // average pool (max pool is free)
    k.op(1, c, c);              // weight * stat + bias
  }
  k.op(1, 0, (enabled - 1) * c);  // summing the terms
}

}  // namespace

MacCount count_macs(Module m, std::size_t h, std::size_t w, std::size_t c, const HsiConfig& cfg) {
  const std::uint64_t p = std::uint64_t(h) * w, s = p, C = c;
  Counter k;
  if (m == Module::attention) {
    k.op(p, 2 * p * C, p * C);   // norm(F_c)
    k.op(p, C * C * p);          // f_q
    k.op(s, 2 * s * C, s * C);   // norm(F_s)
    k.op(s, 2 * C * C * s);      // f_k, f_v
    k.pairwise(p * s * C);       // Q K^T
    k.pairwise(C * s * p);       // A V
    k.op(p, C * C * p);          // f_o
    k.op(p, 0, p * C);           // residual
    return k.count();
  }
  cfg.validate();
  const bool dual = cfg.relation == RelationMode::dual;
  k.op(p, 2 * p * C, p * C);
  k.op(p, C * C * p);
  k.op(s, 2 * s * C, s * C);
  k.op(s, 2 * C * C * s);
  count_descriptor(k, s, C, cfg);  // K_s
  if (dual) {
    k.op(p, 0, p * C);             // pooled Q
    k.op(s, 0, s * C);             // pooled K
    k.op(1, 3 * C);                // cosine
  }
  k.op(p, 0, p * C);               // Q_c
  k.op(1, C);                      // Q_c * K_s
  k.op(1, C);                      // lambda * (.)
  k.op(1, 1);                      // 1 - lambda
  k.op(p, p * C);                  // Q * K_s
  k.op(p, p * C);                  // (1 - lambda) * (.)
  k.op(p, 0, p * C);               // sum of the relations
  count_descriptor(k, s, C, cfg);  // V_s
  k.op(p, p * C);                  // A * V_s
  k.op(p, C * C * p);              // f_o
  k.op(p, 0, p * C);               // residual
  return k.count();
}

std::uint64_t predict_peak_bytes(Module m, std::size_t h, std::size_t w, std::size_t c, const HsiConfig& cfg) {
  const std::uint64_t p = std::uint64_t(h) * w, s = p, C = c;
  const std::uint64_t padded = C * (h + 2) * (w + 2);
  std::uint64_t floats = p * C + s * C;  // inputs
  if (m == Module::attention) {
    floats += 7 * p * C + 5 * s * C + p * s;
    return 4 * floats;
  }
  cfg.validate();
  std::uint64_t e = 0;
  for (bool b : cfg.stats) e += b;
  floats += 9 * p * C + 3 * s * C;
  floats += 2 * (2 * e * (padded + 2 * s * C) + (6 * e - 1) * C);
  floats += cfg.relation == RelationMode::dual ? 2 * C + 1 : 1;
  floats += 3 * C + 1;
  return 4 * floats;
}

MacCount measure_macs(const std::function<void()>& run) {
  MacScope scope;
  run();
  return scope.count();
}

AllocStats measure_alloc(const std::function<void()>& run) {
  memory::AllocationScope scope;
  run();
  return {scope.peak_bytes(), scope.total_bytes()};
}

std::uint64_t measure_peak_alloc(const std::function<void()>& run) { return measure_alloc(run).peak; }

double median_seconds(const std::function<void()>& run, int runs, int warmup) {
  if (runs < 1) throw ArgumentError("timing: need at least one run");
  for (int i = 0; i < warmup; ++i) run();
  std::vector<double> t;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(t.begin(), t.end());
  return t.size() % 2 ? t[t.size() / 2] : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
}

double scaling_fit(std::span<const std::pair<double, double>> pts) {
  if (pts.size() < 3) throw ArgumentError("scaling_fit: need at least 3 points, got " + std::to_string(pts.size()));
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!(pts[i].first > 0) || !(pts[i].second > 0)) throw ArgumentError("scaling_fit: values must be positive");
    if (i && !(pts[i].first > pts[i - 1].first)) throw ArgumentError("scaling_fit: x must be strictly increasing");
    sx += std::log(pts[i].first);
    sy += std::log(pts[i].second);
  }
  const double n = double(pts.size()), mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    const double dx = std::log(x) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y) - my);
  }
  return sxy / sxx;
}

namespace {
Tensor gaussian(const Shape& s, Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor t(s);
  for (auto& v : t.data()) v = static_cast<float>(d(rng));
  return t;
}
}  // namespace

BenchCase::BenchCase(Module m, std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed, const HsiConfig& cfg)
    : module_(m), cfg_(cfg) {
  Rng rng(seed);
  content_ = gaussian(Shape{1, c, h, w}, rng);
  style_ = gaussian(Shape{1, c, h, w}, rng);
  if (m == Module::hsi) hsi_ = make_hsi_weights<float>(c, rng);
  else attn_ = make_attn_weights<float>(c, rng);
}

Var BenchCase::run(std::size_t tile_rows) const {
  if (module_ == Module::hsi) return hsi_forward(content_, style_, hsi_, cfg_);
  return self_attention_forward(content_, style_, attn_, tile_rows);
}

Slopes fit_slopes(const ComplexityReport& report, std::string_view module) {
  std::vector<std::pair<double, double>> macs, bytes;
  for (const auto& r : report.rows) {
    if (r.module != module) continue;
    const double hw = double(r.h) * double(r.w);
    macs.emplace_back(hw, double(r.macs));
    bytes.emplace_back(hw, double(r.peak_bytes));
  }
  return {scaling_fit(macs), scaling_fit(bytes)};
}

std::string format_report(const ComplexityReport& report) {
  std::ostringstream os;
  os << kReportHeader << '\n';
  os << std::setprecision(9);
  for (const auto& r : report.rows)
    os << r.module << ',' << r.h << ',' << r.w << ',' << r.c << ',' << r.macs << ',' << r.peak_bytes << ','
       << r.seconds << '\n';
  return os.str();
}

namespace {
template <class U>
U parse_number(std::string_view field, std::size_t line) {
  U v{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw FormatError("report line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  return v;
}
}  // namespace

ComplexityReport parse_report(std::string_view csv) {
  ComplexityReport rep;
  std::size_t line_no = 0;
  while (!csv.empty()) {
    const auto nl = csv.find('\n');
    std::string_view line = csv.substr(0, nl);
    csv = nl == std::string_view::npos ? std::string_view{} : csv.substr(nl + 1);
    ++line_no;
    if (line_no == 1) {
      if (line != kReportHeader) throw FormatError("report: unexpected header '" + std::string(line) + "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    if (f.size() != 7) throw FormatError("report line " + std::to_string(line_no) + ": expected 7 fields");
    ReportRow r;
    r.module = std::string(f[0]);
    r.h = parse_number<std::size_t>(f[1], line_no);
    r.w = parse_number<std::size_t>(f[2], line_no);
    r.c = parse_number<std::size_t>(f[3], line_no);
    r.macs = parse_number<std::uint64_t>(f[4], line_no);
    r.peak_bytes = parse_number<std::uint64_t>(f[5], line_no);
    r.seconds = parse_number<double>(f[6], line_no);
    rep.rows.push_back(std::move(r));
  }
  if (line_no == 0) throw FormatError("report: empty input");
  return rep;
}

void emit_report(const ComplexityReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << format_report(report);
  if (!f) throw IoError("failed writing '" + path + "'");
}

CapReport simulate_memory_cap(Module m, std::span<const std::size_t> sizes, std::size_t c, std::uint64_t cap_bytes,
                              const HsiConfig& cfg) {
  if (cap_bytes == 0) throw ArgumentError("memory cap must be positive");
  CapReport rep;
  for (std::size_t s : sizes) {
    CapResult r;
    r.size = s;
    r.bytes = predict_peak_bytes(m, s, s, c, cfg);
    r.status = r.bytes > cap_bytes ? CapStatus::exceeds_cap : CapStatus::ok;
    if (r.status == CapStatus::exceeds_cap && !rep.first_failure) rep.first_failure = rep.results.size();
    rep.results.push_back(r);
  }
  return rep;
}

ComplexityReport run_bench(std::span<const Module> modules, std::span<const std::size_t> sizes,
                           const BenchOptions& opt) {
  ComplexityReport rep;
  for (Module m : modules)
    for (std::size_t s : sizes) {
      BenchCase bc(m, s, s, opt.channels, opt.seed, opt.cfg);
      ReportRow r;
      r.module = std::string(module_name(m));
      r.h = r.w = s;
      r.c = opt.channels;
      r.macs = measure_macs([&] { bc.run(opt.tile_rows); }).total();
      r.peak_bytes = predict_peak_bytes(m, s, s, opt.channels, opt.cfg);
      r.seconds = median_seconds([&] { bc.run(opt.tile_rows); }, opt.runs, 1);
      rep.rows.push_back(std::move(r));
    }
  return rep;
}

}  // namespace hsi
