#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace esotune {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Little-endian IEEE-754 doubles, base64-encoded.
std::string encode_f64_le(std::span<const double> values);
std::vector<double> decode_f64_le(std::string_view text);

void append_f64_le(std::string& out, std::span<const double> values);
std::vector<double> read_f64_le(std::string_view bytes);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view content);

/// Simple CSV builder; numbers go through format_double.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(std::span<const double> values);
  void row(const std::vector<std::string>& cells);
  const std::string& str() const { return text_; }

 private:
  std::size_t columns_;
  std::string text_;
};

}  // namespace esotune
