#include "hsi/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "hsi/counters.hpp"

namespace hsi {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
  if (dims.empty() || dims.size() > kMaxRank)
    throw ShapeError("shape: rank must be 1..4, got " + std::to_string(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0) throw ShapeError("shape: extents must be positive");
    dims_[i] = dims[i];
  }
  rank_ = dims.size();
}

std::size_t Shape::numel() const noexcept {
  if (rank_ == 0) return 0;
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < rank_; ++i) os << (i ? "," : "") << dims_[i];
  os << ')';
  return os.str();
}

void require_rank4(const Shape& s, const char* what) {
  if (s.rank() != 4) throw ShapeError(std::string(what) + ": expected rank-4 (N,C,H,W) input, got " + s.str());
}

template <std::floating_point T>
BasicTensor<T> concat_batch(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no tensors");
  const Shape& first = parts.front().shape();
  require_rank4(first, "concat_batch");
  std::size_t n = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    require_rank4(s, "concat_batch");
    if (s.c() != first.c() || s.h() != first.h() || s.w() != first.w())
      throw ShapeError("concat_batch: " + s.str() + " does not match " + first.str());
    n += s.n();
  }
  BasicTensor<T> out(Shape{n, first.c(), first.h(), first.w()});
  auto dst = out.data().begin();
  for (const auto& p : parts) dst = std::copy(p.data().begin(), p.data().end(), dst);
  return out;
}

template <std::floating_point T>
BasicTensor<T> batch_item(const BasicTensor<T>& x, std::size_t n) {
  const Shape& s = x.shape();
  require_rank4(s, "batch_item");
  if (n >= s.n()) throw ShapeError("batch_item: index out of range for " + s.str());
  const std::size_t stride = s.c() * s.h() * s.w();
  return BasicTensor<T>(Shape{1, s.c(), s.h(), s.w()}, x.data().subspan(n * stride, stride));
}

template BasicTensor<float> concat_batch(std::span<const BasicTensor<float>>);
template BasicTensor<double> concat_batch(std::span<const BasicTensor<double>>);
template BasicTensor<float> batch_item(const BasicTensor<float>&, std::size_t);
template BasicTensor<double> batch_item(const BasicTensor<double>&, std::size_t);

// ---------------------------------------------------------------------------
// Allocation and MAC scopes.

namespace memory {
namespace {
thread_local AllocationScope* g_alloc_scope = nullptr;
}

AllocationScope::AllocationScope() noexcept : parent_(g_alloc_scope) { g_alloc_scope = this; }
AllocationScope::~AllocationScope() { g_alloc_scope = parent_; }

void note_alloc(std::size_t bytes) noexcept {
  for (AllocationScope* s = g_alloc_scope; s; s = s->parent_) {
    s->live_ += static_cast<std::int64_t>(bytes);
    s->total_ += bytes;
    if (s->live_ > 0) s->peak_ = std::max<std::uint64_t>(s->peak_, static_cast<std::uint64_t>(s->live_));
  }
}

void note_free(std::size_t bytes) noexcept {
  for (AllocationScope* s = g_alloc_scope; s; s = s->parent_) s->live_ -= static_cast<std::int64_t>(bytes);
}
}  // namespace memory

namespace {
thread_local MacScope* g_mac_scope = nullptr;
}

MacScope::MacScope() noexcept : parent_(g_mac_scope) { g_mac_scope = this; }
MacScope::~MacScope() { g_mac_scope = parent_; }

bool MacScope::active() noexcept { return g_mac_scope != nullptr; }

void MacScope::record(CostClass cls, std::uint64_t macs, std::uint64_t adds) noexcept {
  for (MacScope* s = g_mac_scope; s; s = s->parent_) {
    switch (cls) {
      case CostClass::pairwise: s->count_.pairwise += macs; break;
      case CostClass::spatial: s->count_.spatial += macs; break;
      case CostClass::constant: s->count_.constant += macs; break;
    }
    s->count_.adds += adds;
  }
}

}  // namespace hsi
