#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nbode::io {

// Little-endian IEEE-754 binary64 arrays.
void write_f64(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64(const std::filesystem::path& path, std::size_t expected_count);

void append_u32(std::vector<std::uint8_t>& buf, std::uint32_t v);
void append_u64(std::vector<std::uint8_t>& buf, std::uint64_t v);
void append_f64(std::vector<std::uint8_t>& buf, double v);
void append_varint(std::vector<std::uint8_t>& buf, std::uint64_t v);

// Cursor over a byte buffer; throws FormatError on truncation.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::uint64_t varint();
  std::span<const std::uint8_t> take(std::size_t n);
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace nbode::io
