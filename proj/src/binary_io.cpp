#include "narstar/binary_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

namespace narstar {

namespace {

std::uint32_t crc32_of(const char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32_z(crc, reinterpret_cast<const Bytef*>(data), size);
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void ByteWriter::seal() { u32(crc32_of(buf_.data(), buf_.size())); }

std::string ByteReader::bytes(std::size_t n) {
  if (data_.size() - pos_ < n) fail("unexpected end of file");
  std::string out(data_.data() + pos_, n);
  pos_ += n;
  return out;
}

void ByteReader::verify_seal() {
  if (data_.size() < 4) fail("file too short for checksum");
  const std::size_t body = data_.size() - 4;
  std::uint32_t stored = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[body + i])) << (8 * i);
  }
  if (stored != crc32_of(data_.data(), body)) {
    throw ChecksumMismatch(origin_ + ": checksum mismatch");
  }
  data_.resize(body);
}

void ByteReader::fail(const std::string& what) const { throw FormatError(origin_ + ": " + what); }

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<char>& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw FormatError(path.string() + ": write failed");
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::vector<char>(text.begin(), text.end()));
}

}  // namespace narstar
