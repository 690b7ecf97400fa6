#include "skullkit/gzip.hpp"

#include <zlib.h>

#include "skullkit/error.hpp"

namespace skullkit {

namespace {
constexpr int kGzipWindowBits = 15 + 16;  // zlib: +16 selects the gzip wrapper
}

bool is_gzip(const std::vector<uint8_t>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<uint8_t> gzip_compress(const uint8_t* data, size_t n) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, kGzipWindowBits, 8,
                   Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error(ErrorCode::IoError, "deflateInit2 failed");

  std::vector<uint8_t> out;
  out.resize(deflateBound(&zs, static_cast<uLong>(n)) + 32);
  zs.next_in = const_cast<Bytef*>(data);
  zs.avail_in = static_cast<uInt>(n);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END)
    throw Error(ErrorCode::IoError, "gzip compression failed");
  out.resize(zs.total_out);
  return out;
}

std::vector<uint8_t> gzip_compress(const std::vector<uint8_t>& bytes) {
  return gzip_compress(bytes.data(), bytes.size());
}

std::vector<uint8_t> gzip_decompress(const uint8_t* data, size_t n) {
  z_stream zs{};
  if (inflateInit2(&zs, kGzipWindowBits) != Z_OK)
    throw Error(ErrorCode::IoError, "inflateInit2 failed");

  std::vector<uint8_t> out;
  out.resize(n * 4 + 4096);
  zs.next_in = const_cast<Bytef*>(data);
  zs.avail_in = static_cast<uInt>(n);
  size_t written = 0;
  int rc = Z_OK;
  while (true) {
    zs.next_out = out.data() + written;
    zs.avail_out = static_cast<uInt>(out.size() - written);
    rc = inflate(&zs, Z_NO_FLUSH);
    written = zs.total_out;
    if (rc == Z_STREAM_END) break;
    if (rc == Z_OK || rc == Z_BUF_ERROR) {
      if (zs.avail_in == 0 && rc == Z_BUF_ERROR) break;  // truncated input
      out.resize(out.size() * 2);
      continue;
    }
    inflateEnd(&zs);
    throw Error(ErrorCode::MalformedHeader, "corrupt gzip stream");
  }
  inflateEnd(&zs);
  if (rc != Z_STREAM_END)
    throw Error(ErrorCode::TruncatedPayload, "gzip stream ended prematurely");
  out.resize(written);
  return out;
}

std::vector<uint8_t> gzip_decompress(const std::vector<uint8_t>& bytes) {
  return gzip_decompress(bytes.data(), bytes.size());
}

}  // namespace skullkit
