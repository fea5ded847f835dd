#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hsi/counters.hpp"
#include "hsi/transfer.hpp"

namespace hsi {

enum class Module { hsi, attention };

std::string_view module_name(Module m) noexcept;
/// "hsi" or "attention"; throws ArgumentError otherwise.
Module parse_module(std::string_view s);

// All counts below describe one module (a single HSI block or one attention
// layer) applied to a batch of one, content and style both H x W x C.

/// Closed-form MAC count of the forward pass.
MacCount count_macs(Module m, std::size_t h, std::size_t w, std::size_t c, const HsiConfig& cfg = {});

/// Closed-form bound on live tensor bytes: both inputs plus every buffer the
/// forward allocates, as if nothing were freed. Attention materializes its map.
std::uint64_t predict_peak_bytes(Module m, std::size_t h, std::size_t w, std::size_t c, const HsiConfig& cfg = {});

MacCount measure_macs(const std::function<void()>& run);

struct AllocStats {
  std::uint64_t peak = 0;
  std::uint64_t total = 0;
};

AllocStats measure_alloc(const std::function<void()>& run);
/// Peak tensor-buffer bytes allocated while `run` executes.
std::uint64_t measure_peak_alloc(const std::function<void()>& run);

/// Median wall time of `runs` executions after `warmup` untimed ones.
double median_seconds(const std::function<void()>& run, int runs = 5, int warmup = 1);

/// Least-squares slope of log(value) against log(x). Needs at least 3 points,
/// strictly increasing x and positive values.
double scaling_fit(std::span<const std::pair<double, double>> points);

/// Random inputs and seeded weights for one module at one size.
class BenchCase {
 public:
  BenchCase(Module m, std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed, const HsiConfig& cfg = {});

  /// Untracked forward. `tile_rows` > 0 evaluates attention in row tiles.
  Var run(std::size_t tile_rows = 0) const;

  Module module() const noexcept { return module_; }

 private:
  Module module_;
  HsiConfig cfg_;
  Var content_, style_;
  HsiWeights hsi_;
  AttnWeights attn_;
};

struct ReportRow {
  std::string module;
  std::size_t h = 0, w = 0, c = 0;
  std::uint64_t macs = 0;
  std::uint64_t peak_bytes = 0;
  double seconds = 0.0;
};

struct ComplexityReport {
  std::vector<ReportRow> rows;
};

struct Slopes {
  double macs = 0.0;
  double bytes = 0.0;
};

/// Fits over the rows of `module` (at least 3).
Slopes fit_slopes(const ComplexityReport& report, std::string_view module);

inline constexpr std::string_view kReportHeader = "module,h,w,c,macs,peak_bytes,seconds";

std::string format_report(const ComplexityReport& report);
ComplexityReport parse_report(std::string_view csv);
void emit_report(const ComplexityReport& report, const std::string& path);

enum class CapStatus { ok, exceeds_cap };

struct CapResult {
  std::size_t size = 0;  // square side
  std::uint64_t bytes = 0;
  CapStatus status = CapStatus::ok;
};

struct CapReport {
  std::vector<CapResult> results;
  std::optional<std::size_t> first_failure;  // index into results
};

/// Compares predict_peak_bytes at each square size with `cap_bytes`.
CapReport simulate_memory_cap(Module m, std::span<const std::size_t> sizes, std::size_t c, std::uint64_t cap_bytes,
                              const HsiConfig& cfg = {});

struct BenchOptions {
  std::size_t channels = 16;
  std::uint64_t seed = 42;
  int runs = 5;
  std::size_t tile_rows = 256;
  HsiConfig cfg{};
};

/// One row per (module, size): instrumented MACs, predicted peak bytes and
/// median seconds.
ComplexityReport run_bench(std::span<const Module> modules, std::span<const std::size_t> sizes,
                           const BenchOptions& opt);

}  // namespace hsi
