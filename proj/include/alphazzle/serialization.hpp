#pragma once

// Little-endian binary records: the "AZPZ" puzzle-instance file and the
// state encoding shared by the remote-evaluator protocol and sample export.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alphazzle/error.hpp"
#include "alphazzle/puzzle_env.hpp"

namespace alphazzle {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v)); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  const std::vector<std::uint8_t>& bytes() const& { return bytes_; }
  std::vector<std::uint8_t> bytes() && { return std::move(bytes_); }

 private:
  template <typename T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked reader; running past the end raises `on_error`.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data, ErrorKind on_error = ErrorKind::MalformedResponse)
      : data_(data), on_error_(on_error) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get<1>()); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get<2>()); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get<4>()); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }

  std::span<const std::uint8_t> raw(std::size_t n) {
    require(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void require(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(on_error_, "truncated record");
  }

  template <std::size_t N>
  std::uint64_t get() {
    require(N);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < N; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += N;
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  ErrorKind on_error_;
};

// ---------------------------------------------------------------------------
// Puzzle instance record
//
//   "AZPZ" | u16 version | u32 patch_size | u32 patches_per_side | u32 gap_size
//   | u32 channels | u32 source_id length | source_id bytes
//   | f patches x (patch_size^2 x 3) f32, row-major HWC
//   | p x (u32 position, u32 patch)

inline constexpr std::string_view kInstanceMagic = "AZPZ";
inline constexpr std::uint16_t kInstanceVersion = 1;

inline std::vector<std::uint8_t> encode_instance(const PuzzleInstance& inst) {
  ByteWriter w;
  w.raw(kInstanceMagic);
  w.u16(kInstanceVersion);
  w.u32(static_cast<std::uint32_t>(inst.spec.patch_size));
  w.u32(static_cast<std::uint32_t>(inst.spec.patches_per_side));
  w.u32(static_cast<std::uint32_t>(inst.spec.gap_size));
  w.u32(static_cast<std::uint32_t>(inst.spec.channels));
  w.u32(static_cast<std::uint32_t>(inst.source_id.size()));
  w.raw(inst.source_id);
  for (const Tensor& patch : inst.patches)
    for (float v : patch.data) w.f32(v);
  for (std::size_t pos = 0; pos < inst.solution.size(); ++pos) {
    w.u32(static_cast<std::uint32_t>(pos));
    w.u32(static_cast<std::uint32_t>(inst.solution[pos]));
  }
  return std::move(w).bytes();
}

inline PuzzleInstance decode_instance(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, ErrorKind::Io);
  const auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kInstanceMagic.begin())) throw Error(ErrorKind::Io, "bad instance magic");
  if (r.u16() != kInstanceVersion) throw Error(ErrorKind::Io, "unsupported instance version");
  PuzzleInstance inst;
  inst.spec.patch_size = static_cast<int>(r.u32());
  inst.spec.patches_per_side = static_cast<int>(r.u32());
  inst.spec.gap_size = static_cast<int>(r.u32());
  inst.spec.channels = static_cast<int>(r.u32());
  try {
    inst.spec.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Io, e.what());
  }
  const auto id = r.raw(r.u32());
  inst.source_id.assign(id.begin(), id.end());
  const int f = inst.spec.patches();
  const double payload = 4.0 * f * (3.0 * inst.spec.patch_size * inst.spec.patch_size + 2.0);
  if (payload != static_cast<double>(r.remaining())) throw Error(ErrorKind::Io, "instance record size mismatch");
  for (int k = 0; k < f; ++k) {
    Tensor patch(inst.spec.patch_size, inst.spec.patch_size, 3);
    for (float& v : patch.data) v = r.f32();
    inst.patches.push_back(std::move(patch));
  }
  inst.solution.assign(static_cast<std::size_t>(inst.spec.positions()), kEmpty);
  for (int k = 0; k < inst.spec.positions(); ++k) {
    const std::uint32_t pos = r.u32();
    const std::uint32_t patch = r.u32();
    if (pos >= inst.solution.size() || patch >= static_cast<std::uint32_t>(f)) {
      throw Error(ErrorKind::Io, "solution entry out of range");
    }
    inst.solution[pos] = static_cast<int>(patch);
  }
  if (!PatchOrder{inst.solution}.is_permutation_of(f)) throw Error(ErrorKind::Io, "solution is not a bijection");
  if (!r.done()) throw Error(ErrorKind::Io, "trailing bytes after instance record");
  return inst;
}

inline void save_instance(const PuzzleInstance& inst, const std::filesystem::path& path) {
  const auto bytes = encode_instance(inst);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

inline PuzzleInstance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_instance(bytes);
}

// ---------------------------------------------------------------------------
// State encoding
//
//   u32 n | u32 patch_size | u32 gap_size | u32 channels | u32 t | i32 next_patch
//   | canvas f32, row-major HWC | p x i32 assignment
//   | next patch pixels (patch_size^2 x 3 f32), present iff next_patch >= 0

struct StateEncoding {
  int patches_per_side = 0;
  int patch_size = 0;
  int gap_size = 0;
  int channels = 0;
  int turn = 0;
  int next_patch = kEmpty;
  std::vector<float> canvas;
  std::vector<int> assignment;
  std::vector<float> next_patch_pixels;

  PuzzleSpec spec() const { return {patch_size, patches_per_side, gap_size, channels}; }
  int positions() const { return patches_per_side * patches_per_side; }
};

inline void write_state(ByteWriter& w, const GameState& state) {
  const PuzzleSpec& s = state.spec();
  w.u32(static_cast<std::uint32_t>(s.patches_per_side));
  w.u32(static_cast<std::uint32_t>(s.patch_size));
  w.u32(static_cast<std::uint32_t>(s.gap_size));
  w.u32(static_cast<std::uint32_t>(s.channels));
  w.u32(static_cast<std::uint32_t>(state.turn()));
  const auto next = state.next_patch();
  w.i32(next.value_or(kEmpty));
  for (float v : state.canvas().data) w.f32(v);
  for (int v : state.assignment()) w.i32(v);
  if (next) {
    for (float v : state.instance().patches[static_cast<std::size_t>(*next)].data) w.f32(v);
  }
}

inline std::vector<std::uint8_t> encode_state(const GameState& state) {
  ByteWriter w;
  write_state(w, state);
  return std::move(w).bytes();
}

inline StateEncoding read_state(ByteReader& r) {
  StateEncoding e;
  e.patches_per_side = static_cast<int>(r.u32());
  e.patch_size = static_cast<int>(r.u32());
  e.gap_size = static_cast<int>(r.u32());
  e.channels = static_cast<int>(r.u32());
  e.turn = static_cast<int>(r.u32());
  e.next_patch = r.i32();
  const PuzzleSpec spec = e.spec();
  try {
    spec.validate();
  } catch (const Error& err) {
    throw Error(ErrorKind::ProtocolViolation, err.what());
  }
  // Guard against absurd headers before allocating.
  if (spec.canvas_side() > 8192 || e.turn > spec.positions() || e.next_patch < kEmpty ||
      e.next_patch >= spec.patches()) {
    throw Error(ErrorKind::ProtocolViolation, "state header out of range");
  }
  const std::size_t side = static_cast<std::size_t>(spec.canvas_side());
  e.canvas.resize(side * side * static_cast<std::size_t>(spec.channels));
  for (float& v : e.canvas) v = r.f32();
  e.assignment.resize(static_cast<std::size_t>(spec.positions()));
  for (int& v : e.assignment) v = r.i32();
  if (e.next_patch >= 0) {
    e.next_patch_pixels.resize(static_cast<std::size_t>(spec.patch_size) * spec.patch_size * 3);
    for (float& v : e.next_patch_pixels) v = r.f32();
  }
  return e;
}

inline StateEncoding decode_state(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, ErrorKind::ProtocolViolation);
  StateEncoding e = read_state(r);
  if (!r.done()) throw Error(ErrorKind::ProtocolViolation, "trailing bytes after state");
  return e;
}

// ---------------------------------------------------------------------------
// Base64 (RFC 4648, padded)

inline std::string base64_encode(std::span<const std::uint8_t> data) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < data.size(); i += 3) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == data.size()) {
    const std::uint32_t v = data[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == data.size()) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw Error(ErrorKind::Io, "base64 length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else {
        v[k] = value(c);
        if (v[k] < 0 || pad > 0) throw Error(ErrorKind::Io, "invalid base64");
      }
    }
    const std::uint32_t word = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(word >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(word >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(word));
  }
  return out;
}

}  // namespace alphazzle
