#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hsi/autograd.hpp"

namespace hsi {

// HSIW layout, little-endian: "HSIW", u32 version (1), u32 count, then per
// tensor u32 name length, name bytes, u32 rank, rank x u32 extents, f32 data.

inline constexpr std::uint32_t kWeightVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Tensors in file order.
using WeightStore = std::vector<NamedTensor>;

std::vector<std::uint8_t> serialize_weights(const WeightStore& store);
/// Throws FormatError for bad magic, unsupported version, duplicate names or
/// truncation (naming the byte offset).
WeightStore parse_weights(std::span<const std::uint8_t> bytes);

void write_weights(const std::string& path, const WeightStore& store);
WeightStore read_weights(const std::string& path);

template <class W>
WeightStore collect_weights(W& weights) {
  WeightStore store;
  weights.for_each_param([&](std::string_view name, Var& p) { store.push_back({std::string(name), p.value()}); });
  return store;
}

/// Strict: any unknown, missing or mis-shaped tensor fails with every
/// offending name listed.
void check_schema(const WeightStore& expected, const WeightStore& actual);

template <class W>
void assign_weights(W& weights, const WeightStore& store) {
  check_schema(collect_weights(weights), store);
  std::map<std::string, const Tensor*, std::less<>> by_name;
  for (const auto& t : store) by_name.emplace(t.name, &t.value);
  weights.for_each_param([&](std::string_view name, Var& p) { p = Var(*by_name.find(name)->second); });
}

}  // namespace hsi
