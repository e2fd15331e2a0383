#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qccnn::io {

// Little-endian byte buffer used by the QTN1 and checkpoint formats.
class Writer {
 public:
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(const void* data, std::size_t n);
  void str(const std::string& s);  // u32 length + raw bytes

  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

// Throws FormatError naming the byte offset on truncation.
class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}

  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void bytes(void* out, std::size_t n);
  std::string str();

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }
  void expect_end() const;  // trailing bytes are a format error

 private:
  void need(std::size_t n) const;
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);

// Writes to <path>.tmp then renames, so interrupted runs never leave
// truncated outputs.
void atomic_write_file(const std::string& path, const void* data, std::size_t n);
void atomic_write_file(const std::string& path, const std::string& text);

}  // namespace qccnn::io
