#pragma once

#include <cstdint>

namespace hsi {

/// How an op's cost scales with the spatial extent of its operands.
enum class CostClass {
  pairwise,  // products between every content and every style position
  spatial,   // proportional to pixel count
  constant,  // operates on (N, C, 1, 1) descriptors only
};

/// Multiply-accumulate counts split by scaling class. Plain additions are
/// kept apart in `adds` (each worth half a MAC).
struct MacCount {
  std::uint64_t pairwise = 0;
  std::uint64_t spatial = 0;
  std::uint64_t constant = 0;
  std::uint64_t adds = 0;

  std::uint64_t total() const noexcept { return pairwise + spatial + constant; }

  MacCount& operator+=(const MacCount& o) noexcept {
    pairwise += o.pairwise;
    spatial += o.spatial;
    constant += o.constant;
    adds += o.adds;
    return *this;
  }
  friend MacCount operator+(MacCount a, const MacCount& b) noexcept { return a += b; }
  friend bool operator==(const MacCount&, const MacCount&) = default;
};

/// Accumulates the MACs of every op dispatched on this thread while alive.
/// Nested scopes all observe the same ops.
class MacScope {
 public:
  MacScope() noexcept;
  ~MacScope();
  MacScope(const MacScope&) = delete;
  MacScope& operator=(const MacScope&) = delete;

  const MacCount& count() const noexcept { return count_; }

  static void record(CostClass cls, std::uint64_t macs, std::uint64_t adds) noexcept;
  static bool active() noexcept;

 private:
  MacScope* parent_;
  MacCount count_;
};

}  // namespace hsi
