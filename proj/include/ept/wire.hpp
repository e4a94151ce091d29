#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

// Little-endian binary encoding shared by the on-disk formats.
namespace ept::wire {

inline void put_u8(std::string& s, std::uint8_t v) { s.push_back(static_cast<char>(v)); }

inline void put_u16(std::string& s, std::uint16_t v) {
  for (int b = 0; b < 2; ++b) s.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) s.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline void put_u64(std::string& s, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) s.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline void put_f64(std::string& s, double v) { put_u64(s, std::bit_cast<std::uint64_t>(v)); }

/// Sequential decoder; `what` names the format in error messages.
struct Reader {
  const std::string& data;
  const char* what = "stream";
  std::size_t off = 0;

  void need(std::size_t k) const {
    if (off + k > data.size()) throw std::runtime_error(std::string(what) + " truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data[off++]);
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(bytes(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(bytes(4)); }
  std::uint64_t u64() { return bytes(8); }
  double f64() { return std::bit_cast<double>(bytes(8)); }

 private:
  std::uint64_t bytes(int k) {
    need(static_cast<std::size_t>(k));
    std::uint64_t v = 0;
    for (int b = 0; b < k; ++b)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[off++])) << (8 * b);
    return v;
  }
};

inline std::string read_file(const std::string& path, const char* what) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(std::string("cannot read ") + what + ": " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& s, const char* what) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error(std::string("cannot write ") + what + ": " + path);
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) throw std::runtime_error(std::string("short write on ") + what + ": " + path);
}

}  // namespace ept::wire
