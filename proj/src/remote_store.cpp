#include "mepic/remote_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mepic/errors.hpp"

namespace mepic {
namespace {

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::byte>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

 private:
  std::vector<std::byte>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return std::to_integer<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > in_.size()) raise(ErrorCode::IoError, "truncated remote chunk record");
  }
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::byte> encode_remote_record(const RemoteChunkRecord& rec) {
  if (rec.padded_tokens.size() != static_cast<std::size_t>(rec.k) * rec.block_size)
    raise(ErrorCode::ShapeMismatch, "token count does not match k * block_size");
  if (rec.payload_present && rec.pages.size() != rec.k)
    raise(ErrorCode::ShapeMismatch, "page count does not match k");

  std::vector<std::byte> out;
  ByteWriter w(out);
  w.u32(kRemoteFormatVersion);
  w.u64(rec.id.hi);
  w.u64(rec.id.lo);
  w.u32(rec.block_size);
  w.u32(rec.k);
  w.u8(rec.payload_present ? 1 : 0);
  for (Token t : rec.padded_tokens) w.u32(static_cast<std::uint32_t>(t));
  if (rec.payload_present) {
    const std::size_t per_page = static_cast<std::size_t>(rec.block_size) * rec.d_head;
    w.u32(rec.d_head);
    for (const KvPage& page : rec.pages) {
      if (page.keys.size() != per_page || page.values.size() != per_page || page.valid.size() != rec.block_size)
        raise(ErrorCode::ShapeMismatch, "page shape does not match geometry");
      for (float f : page.keys) w.f32(f);
      for (float f : page.values) w.f32(f);
      for (std::uint8_t m : page.valid) w.u8(m);
    }
  }
  return out;
}

RemoteChunkRecord decode_remote_record(std::span<const std::byte> bytes) {
  ByteReader r(bytes);
  RemoteChunkRecord rec;
  const std::uint32_t version = r.u32();
  if (version != kRemoteFormatVersion)
    raise(ErrorCode::IoError, "unsupported remote record version " + std::to_string(version));
  rec.id.hi = r.u64();
  rec.id.lo = r.u64();
  rec.block_size = r.u32();
  rec.k = r.u32();
  rec.payload_present = r.u8() != 0;
  const std::size_t n_tokens = static_cast<std::size_t>(rec.k) * rec.block_size;
  rec.padded_tokens.resize(n_tokens);
  for (std::size_t i = 0; i < n_tokens; ++i) rec.padded_tokens[i] = static_cast<Token>(r.u32());
  if (rec.payload_present) {
    rec.d_head = r.u32();
    const std::size_t per_page = static_cast<std::size_t>(rec.block_size) * rec.d_head;
    rec.pages.resize(rec.k);
    for (KvPage& page : rec.pages) {
      page.keys.resize(per_page);
      page.values.resize(per_page);
      page.valid.resize(rec.block_size);
      for (float& f : page.keys) f = r.f32();
      for (float& f : page.values) f = r.f32();
      for (std::uint8_t& m : page.valid) m = r.u8();
    }
  }
  if (!r.done()) raise(ErrorCode::IoError, "trailing bytes in remote chunk record");
  return rec;
}

void RemoteStore::put(const RemoteChunkRecord& rec) { records_[rec.id] = encode_remote_record(rec); }

std::optional<RemoteChunkRecord> RemoteStore::get(const ChunkId& id) const {
  auto it = records_.find(id);
  if (it == records_.end()) return std::nullopt;
  return decode_remote_record(it->second);
}

const std::vector<std::byte>* RemoteStore::raw(const ChunkId& id) const {
  auto it = records_.find(id);
  return it == records_.end() ? nullptr : &it->second;
}

Tick RemoteStore::transfer_cost(std::uint32_t blocks) const {
  if (blocks == 0) return 0;
  if (bandwidth_ <= 0.0) return latency_;
  return latency_ + static_cast<Tick>(std::ceil(static_cast<double>(blocks) / bandwidth_));
}

void RemoteStore::save_directory(const std::string& dir) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  for (const auto& [id, bytes] : records_) {
    const fs::path path = fs::path(dir) / (to_hex(id) + ".chunk");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

void RemoteStore::load_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir)) raise(ErrorCode::IoError, "remote store directory not found: " + dir);
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".chunk") paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  for (const fs::path& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::IoError, "cannot read " + path.string());
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> bytes(data.size());
    std::memcpy(bytes.data(), data.data(), data.size());
    const RemoteChunkRecord rec = decode_remote_record(bytes);  // validates
    records_[rec.id] = std::move(bytes);
  }
}

}  // namespace mepic
