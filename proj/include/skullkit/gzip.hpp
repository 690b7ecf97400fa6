#pragma once

#include <cstdint>
#include <vector>

namespace skullkit {

bool is_gzip(const std::vector<uint8_t>& bytes);

std::vector<uint8_t> gzip_compress(const uint8_t* data, size_t n);
std::vector<uint8_t> gzip_compress(const std::vector<uint8_t>& bytes);

// Throws Error(TruncatedPayload / MalformedHeader) on corrupt streams.
std::vector<uint8_t> gzip_decompress(const uint8_t* data, size_t n);
std::vector<uint8_t> gzip_decompress(const std::vector<uint8_t>& bytes);

}  // namespace skullkit
