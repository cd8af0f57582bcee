#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ph/base_lm.hpp"
#include "ph/crc64.hpp"
#include "ph/errors.hpp"
#include "ph/ph_head.hpp"

namespace ph {

// Binary model formats, little-endian throughout:
//   base model  "PIBM" | version u32 | dims u32 x5 | frozen u8 |
//               vocab (u32 count, then u32 length + UTF-8 bytes per token in
//               id order) | weight tensors as f32 in declared order | CRC-64
//   user head   "PIPH" | version u32 | d_model u32 | d_ff u32 | n_heads u32 |
//               dropout_p f32 | seed u64 | weight tensors as f32 | CRC-64
// The trailing CRC-64 covers every preceding byte; loads verify it before
// anything is interpreted.

constexpr std::uint32_t kBaseFormatVersion = 1;
constexpr std::uint32_t kHeadFormatVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u32(bits);
  }
  void bytes(const void* data, std::size_t len) {
    buf_.append(static_cast<const char*>(data), len);
  }
  void tensor(const Tensor& t) {
    for (const float v : t.data) f32(v);
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string blob) : blob_(std::move(blob)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str(std::size_t len) { return std::string(take(len), len); }
  void tensor(Tensor& t) {
    for (float& v : t.data) v = f32();
  }
  bool exhausted() const { return pos_ == blob_.size(); }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > blob_.size()) throw IoError("unexpected end of file while parsing model data");
    const char* p = blob_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string blob_;
  std::size_t pos_{0};
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return std::move(os).str();
}

// Separates payload from the trailing CRC-64 and verifies it.
inline std::string checked_payload(const std::filesystem::path& path) {
  std::string blob = read_file(path);
  if (blob.size() < 12) throw IoError(path.string() + " is too short to be a model file");
  const std::string crc_bytes = blob.substr(blob.size() - 8);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(crc_bytes[static_cast<std::size_t>(i)])) << (8 * i);
  }
  blob.resize(blob.size() - 8);
  const std::uint64_t actual = Crc64::of(blob.data(), blob.size());
  if (actual != stored) {
    throw CorruptionError(path.string() + " failed CRC-64 verification (file is corrupt)");
  }
  return blob;
}

// Write-to-temp-then-rename so readers never observe a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& payload_with_crc) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.parent_path() / (".tmp-" + path.filename().string());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(payload_with_crc.data(), static_cast<std::streamsize>(payload_with_crc.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string with_crc(const ByteWriter& w) {
  const std::uint64_t crc = Crc64::of(w.data().data(), w.data().size());
  std::string out = w.data();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((crc >> (8 * i)) & 0xFF));
  return out;
}

}  // namespace detail

inline std::string serialize_base(const BaseLM& model) {
  detail::ByteWriter w;
  w.bytes("PIBM", 4);
  w.u32(kBaseFormatVersion);
  w.u32(static_cast<std::uint32_t>(model.config.d_model));
  w.u32(static_cast<std::uint32_t>(model.config.n_layers));
  w.u32(static_cast<std::uint32_t>(model.config.n_heads));
  w.u32(static_cast<std::uint32_t>(model.config.d_ff_base));
  w.u32(static_cast<std::uint32_t>(model.config.max_seq_len));
  w.u8(model.frozen ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(model.vocab.size()));
  for (const std::string& tok : model.vocab.tokens()) {
    w.u32(static_cast<std::uint32_t>(tok.size()));
    w.bytes(tok.data(), tok.size());
  }
  model.for_each_weight([&w](const Tensor& t) { w.tensor(t); });
  return detail::with_crc(w);
}

inline void save_base(const std::filesystem::path& path, const BaseLM& model) {
  detail::atomic_write(path, serialize_base(model));
}

inline BaseLM load_base(const std::filesystem::path& path) {
  detail::ByteReader r(detail::checked_payload(path));
  if (r.str(4) != "PIBM") throw IoError(path.string() + " is not a base model file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kBaseFormatVersion) {
    throw IoError(path.string() + " has unsupported format version " + std::to_string(version));
  }
  BaseConfig cfg;
  cfg.d_model = r.u32();
  cfg.n_layers = r.u32();
  cfg.n_heads = r.u32();
  cfg.d_ff_base = r.u32();
  cfg.max_seq_len = r.u32();
  const bool frozen = r.u8() != 0;
  const std::uint32_t vocab_size = r.u32();
  Vocab vocab;
  for (std::uint32_t i = 0; i < vocab_size; ++i) {
    const std::uint32_t len = r.u32();
    std::string tok = r.str(len);
    if (i < static_cast<std::uint32_t>(Vocab::kReservedCount)) {
      if (tok != vocab.token(static_cast<int>(i))) {
        throw IoError(path.string() + " reserved token mismatch at id " + std::to_string(i));
      }
    } else {
      vocab.add(std::move(tok));
    }
  }

  BaseLM model = init_base_lm<float>(std::move(vocab), cfg, 0);
  model.for_each_weight([&r](Tensor& t) { r.tensor(t); });
  if (!r.exhausted()) throw IoError(path.string() + " has trailing bytes after weights");
  if (frozen) {
    freeze(model);
  }
  return model;
}

inline std::string serialize_head(const PersonalizationHead& head) {
  detail::ByteWriter w;
  w.bytes("PIPH", 4);
  w.u32(kHeadFormatVersion);
  w.u32(static_cast<std::uint32_t>(head.config.d_model));
  w.u32(static_cast<std::uint32_t>(head.config.d_ff));
  w.u32(static_cast<std::uint32_t>(head.config.n_heads));
  w.f32(head.config.dropout_p);
  w.u64(head.config.seed);
  head.for_each_weight([&w](const Tensor& t) { w.tensor(t); });
  return detail::with_crc(w);
}

// Fixed byte cost of the head format around the 4 bytes/param payload.
constexpr std::size_t kHeadFileOverhead = 4 + 4 + 4 + 4 + 4 + 4 + 8 + 8;

inline void save_head(const std::filesystem::path& path, const PersonalizationHead& head) {
  detail::atomic_write(path, serialize_head(head));
}

inline PersonalizationHead load_head(const std::filesystem::path& path) {
  detail::ByteReader r(detail::checked_payload(path));
  if (r.str(4) != "PIPH") throw IoError(path.string() + " is not a head file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kHeadFormatVersion) {
    throw IoError(path.string() + " has unsupported format version " + std::to_string(version));
  }
  PHConfig cfg;
  cfg.d_model = r.u32();
  cfg.d_ff = r.u32();
  cfg.n_heads = r.u32();
  cfg.dropout_p = r.f32();
  cfg.seed = r.u64();
  PersonalizationHead head = init_head(cfg);
  head.for_each_weight([&r](Tensor& t) { r.tensor(t); });
  if (!r.exhausted()) throw IoError(path.string() + " has trailing bytes after weights");
  return head;
}

}  // namespace ph
