#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <new>

namespace hsi::memory {

void note_alloc(std::size_t bytes) noexcept;
void note_free(std::size_t bytes) noexcept;

/// Tracks tensor-buffer bytes allocated on the current thread while alive.
///
/// Scopes nest; every active scope on the thread sees every allocation.
/// Frees of buffers allocated before the scope opened drive `live_bytes`
/// negative, which never raises the peak.
class AllocationScope {
 public:
  AllocationScope() noexcept;
  ~AllocationScope();
  AllocationScope(const AllocationScope&) = delete;
  AllocationScope& operator=(const AllocationScope&) = delete;

  std::int64_t live_bytes() const noexcept { return live_; }
  std::uint64_t peak_bytes() const noexcept { return peak_; }
  /// Sum of every allocation made while the scope was open.
  std::uint64_t total_bytes() const noexcept { return total_; }

 private:
  friend void note_alloc(std::size_t) noexcept;
  friend void note_free(std::size_t) noexcept;

  AllocationScope* parent_;
  std::int64_t live_ = 0;
  std::uint64_t peak_ = 0;
  std::uint64_t total_ = 0;
};

/// Bytes of alignment of every tensor buffer. SIMD reductions pick their
/// split by address, so a fixed alignment keeps results bit-reproducible.
inline constexpr std::size_t kBufferAlign = 64;

/// Aligned allocator that reports every allocation to the active scopes.
template <class T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kBufferAlign}));
    note_alloc(n * sizeof(T));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    note_free(n * sizeof(T));
    ::operator delete(p, std::align_val_t{kBufferAlign});
  }

  template <class U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

}  // namespace hsi::memory
