#include "hsi/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace hsi {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n)
      throw FormatError("weight file truncated at byte offset " + std::to_string(pos_) + " while reading " + what);
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_weights(const WeightStore& store) {
  std::vector<std::uint8_t> out{'H', 'S', 'I', 'W'};
  put_u32(out, kWeightVersion);
  put_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& t : store) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    const Shape& s = t.value.shape();
    put_u32(out, static_cast<std::uint32_t>(s.rank()));
    for (std::size_t d : s.dims()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

WeightStore parse_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "HSIW", 4) != 0) throw FormatError("not a weight file (bad magic)");
  Reader r(bytes.subspan(0));
  r.bytes(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kWeightVersion) throw FormatError("unsupported weight file version " + std::to_string(version));
  const std::uint32_t count = r.u32("tensor count");
  WeightStore store;
  std::set<std::string, std::less<>> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("name length");
    const auto name_bytes = r.bytes(len, "tensor name");
    std::string name(name_bytes.begin(), name_bytes.end());
    if (!seen.insert(name).second) throw FormatError("duplicate tensor name '" + name + "' in weight file");
    const std::size_t rank_at = r.pos();
    const std::uint32_t rank = r.u32("rank");
    if (rank < 1 || rank > Shape::kMaxRank)
      throw FormatError("tensor '" + name + "' has invalid rank " + std::to_string(rank) + " at byte offset " +
                        std::to_string(rank_at));
    std::vector<std::size_t> dims;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::size_t at = r.pos();
      const std::uint32_t e = r.u32("extent");
      if (e == 0) throw FormatError("tensor '" + name + "' has a zero extent at byte offset " + std::to_string(at));
      dims.push_back(e);
      numel *= e;
      if (numel > r.remaining() / 4 + 1)
        throw FormatError("weight file truncated at byte offset " + std::to_string(r.pos()) + " while reading data of '" +
                          name + "'");
    }
    const auto data = r.bytes(numel * 4, "tensor data");
    Tensor t{Shape(std::span<const std::size_t>(dims))};
    for (std::size_t j = 0; j < numel; ++j) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= std::uint32_t(data[4 * j + b]) << (8 * b);
      t[j] = std::bit_cast<float>(u);
    }
    store.push_back({std::move(name), std::move(t)});
  }
  if (r.remaining() != 0)
    throw FormatError("trailing bytes after the last tensor at byte offset " + std::to_string(r.pos()));
  return store;
}

void write_weights(const std::string& path, const WeightStore& store) {
  const auto bytes = serialize_weights(store);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing '" + path + "'");
}

WeightStore read_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weight file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_weights(bytes);
}

void check_schema(const WeightStore& expected, const WeightStore& actual) {
  std::map<std::string, Shape, std::less<>> want;
  for (const auto& t : expected) want.emplace(t.name, t.value.shape());
  std::string unknown, missing, mismatched;
  const auto append = [](std::string& list, const std::string& item) { list += (list.empty() ? "" : ", ") + item; };
  std::set<std::string, std::less<>> present;
  for (const auto& t : actual) {
    present.insert(t.name);
    auto it = want.find(t.name);
    if (it == want.end()) append(unknown, t.name);
    else if (it->second != t.value.shape())
      append(mismatched, t.name + " " + t.value.shape().str() + " expected " + it->second.str());
  }
  for (const auto& t : expected)
    if (!present.contains(t.name)) append(missing, t.name);
  std::string msg;
  if (!unknown.empty()) msg += "unknown tensors: " + unknown;
  if (!missing.empty()) msg += (msg.empty() ? "" : "; ") + std::string("missing tensors: ") + missing;
  if (!mismatched.empty()) msg += (msg.empty() ? "" : "; ") + std::string("shape mismatch: ") + mismatched;
  if (!msg.empty()) throw FormatError("weight schema mismatch: " + msg);
}

}  // namespace hsi
