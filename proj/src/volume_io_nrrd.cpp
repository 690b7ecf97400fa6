#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <optional>
#include <sstream>

#include "skullkit/gzip.hpp"
#include "skullkit/volume_io.hpp"

namespace skullkit {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

double parse_number(const std::string& tok, const char* field) {
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw Error(ErrorCode::MalformedHeader,
                std::string("non-numeric value '") + tok + "' in field '" + field + "'");
  return v;
}

// Parses a NRRD vector like "(1,0,0)"; "none" yields nullopt.
std::optional<std::array<double, 3>> parse_vector3(const std::string& tok) {
  std::string t = trim(tok);
  if (lower(t) == "none") return std::nullopt;
  if (t.size() < 2 || t.front() != '(' || t.back() != ')')
    throw Error(ErrorCode::MalformedHeader, "expected vector '(a,b,c)', got '" + t + "'");
  std::array<double, 3> v{};
  std::string inner = t.substr(1, t.size() - 2);
  std::replace(inner.begin(), inner.end(), ',', ' ');
  auto parts = split_ws(inner);
  if (parts.size() != 3)
    throw Error(ErrorCode::MalformedHeader, "vector '" + t + "' is not 3-dimensional");
  for (int i = 0; i < 3; ++i) v[i] = parse_number(parts[i], "space vector");
  return v;
}

// Splits "space directions: (a,b,c) (d,e,f) none" into vector tokens.
std::vector<std::string> split_vectors(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size()) break;
    if (s[i] == '(') {
      size_t close = s.find(')', i);
      if (close == std::string::npos)
        throw Error(ErrorCode::MalformedHeader, "unterminated vector in '" + s + "'");
      out.push_back(s.substr(i, close - i + 1));
      i = close + 1;
    } else {
      size_t end = i;
      while (end < s.size() && !std::isspace(static_cast<unsigned char>(s[end]))) ++end;
      out.push_back(s.substr(i, end - i));
      i = end;
    }
  }
  return out;
}

void byteswap32(uint8_t* data, size_t n_values) {
  for (size_t i = 0; i < n_values; ++i) {
    std::swap(data[4 * i + 0], data[4 * i + 3]);
    std::swap(data[4 * i + 1], data[4 * i + 2]);
  }
}

std::string format_float(float v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace

Volume parse_nrrd(const std::vector<uint8_t>& bytes, std::vector<std::string>* warnings) {
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };

  // magic line: NRRD000X
  size_t nl = 0;
  while (nl < bytes.size() && bytes[nl] != '\n') ++nl;
  if (nl >= bytes.size())
    throw Error(ErrorCode::BadMagic, "input has no header lines");
  std::string magic(reinterpret_cast<const char*>(bytes.data()), nl);
  if (!magic.empty() && magic.back() == '\r') magic.pop_back();
  if (magic.size() != 8 || magic.rfind("NRRD000", 0) != 0 || magic[7] < '1' || magic[7] > '5')
    throw Error(ErrorCode::BadMagic, "not a NRRD file (magic '" + magic + "')");

  // header lines until the blank line
  std::map<std::string, std::string> fields;
  size_t pos = nl + 1;
  size_t data_start = 0;
  bool terminated = false;
  while (pos < bytes.size()) {
    size_t eol = pos;
    while (eol < bytes.size() && bytes[eol] != '\n') ++eol;
    std::string line(reinterpret_cast<const char*>(bytes.data() + pos), eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = eol + 1;
    if (line.empty()) {
      terminated = true;
      data_start = pos;
      break;
    }
    if (line[0] == '#') continue;
    size_t asgn = line.find(":=");
    if (asgn != std::string::npos) {
      warn("ignoring key/value pair '" + line.substr(0, asgn) + "'");
      continue;
    }
    size_t colon = line.find(": ");
    if (colon == std::string::npos) {
      // tolerate "field:value" without a space
      colon = line.find(':');
      if (colon == std::string::npos)
        throw Error(ErrorCode::MalformedHeader, "header line without ':': '" + line + "'");
      fields[lower(trim(line.substr(0, colon)))] = trim(line.substr(colon + 1));
      continue;
    }
    fields[lower(trim(line.substr(0, colon)))] = trim(line.substr(colon + 2));
  }
  if (!terminated)
    throw Error(ErrorCode::MalformedHeader, "header not terminated by a blank line");

  auto require = [&](const char* name) -> std::string {
    auto it = fields.find(name);
    if (it == fields.end())
      throw Error(ErrorCode::MalformedHeader, std::string("missing required field '") + name + "'");
    return it->second;
  };

  // dimension / sizes
  long dimension = std::lround(parse_number(require("dimension"), "dimension"));
  if (dimension != 3)
    throw Error(ErrorCode::UnsupportedFeature,
                "only 3-dimensional volumes are supported, got dimension " +
                    std::to_string(dimension));
  auto size_toks = split_ws(require("sizes"));
  if (size_toks.size() != 3)
    throw Error(ErrorCode::MalformedHeader, "'sizes' must list 3 values");
  std::array<int64_t, 3> dims{};
  for (int i = 0; i < 3; ++i) {
    double v = parse_number(size_toks[i], "sizes");
    if (v < 1 || v != std::floor(v))
      throw Error(ErrorCode::MalformedHeader, "'sizes' entries must be positive integers");
    dims[i] = static_cast<int64_t>(v);
  }

  // type
  std::string type = lower(require("type"));
  Dtype dtype;
  if (type == "uchar" || type == "unsigned char" || type == "uint8" || type == "uint8_t")
    dtype = Dtype::U8;
  else if (type == "float" || type == "float32")
    dtype = Dtype::F32;
  else
    throw Error(ErrorCode::UnsupportedFeature, "unsupported voxel type '" + type + "'");

  // encoding
  std::string encoding = lower(require("encoding"));
  if (encoding != "raw" && encoding != "gzip" && encoding != "gz")
    throw Error(ErrorCode::UnsupportedFeature, "unsupported encoding '" + encoding + "'");

  bool big_endian = false;
  if (auto it = fields.find("endian"); it != fields.end()) {
    std::string e = lower(it->second);
    if (e == "big")
      big_endian = true;
    else if (e != "little")
      throw Error(ErrorCode::MalformedHeader, "unknown endian '" + it->second + "'");
  }

  // spacing: "space directions" wins over "spacings"
  std::array<float, 3> spacing{1.f, 1.f, 1.f};
  if (auto it = fields.find("space directions"); it != fields.end()) {
    auto toks = split_vectors(it->second);
    if (toks.size() != 3)
      throw Error(ErrorCode::MalformedHeader, "'space directions' must list 3 vectors");
    for (int axis = 0; axis < 3; ++axis) {
      auto vec = parse_vector3(toks[axis]);
      if (!vec) {
        spacing[axis] = 1.f;
        continue;
      }
      for (int j = 0; j < 3; ++j) {
        if (j == axis) continue;
        if ((*vec)[j] != 0.0)
          throw Error(ErrorCode::UnsupportedFeature,
                      "non-axis-aligned 'space directions' are not supported");
      }
      if (!((*vec)[axis] > 0.0))
        throw Error(ErrorCode::UnsupportedFeature,
                    "'space directions' with flipped or degenerate axes are not supported");
      spacing[axis] = static_cast<float>((*vec)[axis]);
    }
  } else if (auto it2 = fields.find("spacings"); it2 != fields.end()) {
    auto toks = split_ws(it2->second);
    if (toks.size() != 3)
      throw Error(ErrorCode::MalformedHeader, "'spacings' must list 3 values");
    for (int i = 0; i < 3; ++i) {
      double v = parse_number(toks[i], "spacings");
      if (!(v > 0.0))
        throw Error(ErrorCode::MalformedHeader, "'spacings' entries must be > 0");
      spacing[i] = static_cast<float>(v);
    }
  }

  std::array<float, 3> origin{0.f, 0.f, 0.f};
  if (auto it = fields.find("space origin"); it != fields.end()) {
    auto vec = parse_vector3(it->second);
    if (vec)
      for (int i = 0; i < 3; ++i) origin[i] = static_cast<float>((*vec)[i]);
  }

  static const char* known[] = {"type",       "dimension",       "sizes",
                                "encoding",   "endian",          "spacings",
                                "space directions", "space origin", "space dimension",
                                "space",      "kinds",           "space units",
                                "content"};
  for (const auto& [key, value] : fields) {
    (void)value;
    bool recognized = false;
    for (const char* k : known) recognized |= (key == k);
    if (!recognized) warn("ignoring unknown field '" + key + "'");
  }

  // payload
  size_t voxels = static_cast<size_t>(dims[0]) * dims[1] * dims[2];
  size_t value_size = dtype == Dtype::U8 ? 1 : 4;
  size_t expected = voxels * value_size;

  std::vector<uint8_t> payload;
  if (encoding == "raw") {
    payload.assign(bytes.begin() + static_cast<ptrdiff_t>(data_start), bytes.end());
  } else {
    if (data_start >= bytes.size())
      throw Error(ErrorCode::PayloadSizeMismatch, "gzip payload is empty");
    payload = gzip_decompress(bytes.data() + data_start, bytes.size() - data_start);
  }
  if (payload.size() != expected)
    throw Error(ErrorCode::PayloadSizeMismatch,
                "payload holds " + std::to_string(payload.size()) + " bytes, header implies " +
                    std::to_string(expected));

  Volume vol;
  vol.dims = dims;
  vol.spacing = spacing;
  vol.origin = origin;
  vol.dtype = dtype;
  if (dtype == Dtype::U8) {
    vol.u8 = std::move(payload);
  } else {
    if (big_endian) byteswap32(payload.data(), voxels);
    vol.f32.resize(voxels);
    std::memcpy(vol.f32.data(), payload.data(), expected);
  }
  vol.validate();
  return vol;
}

std::vector<uint8_t> write_nrrd(const Volume& vol, Encoding encoding) {
  vol.validate();
  std::ostringstream h;
  h << "NRRD0004\n";
  h << "type: " << (vol.dtype == Dtype::U8 ? "uint8" : "float") << "\n";
  h << "dimension: 3\n";
  h << "sizes: " << vol.dims[0] << " " << vol.dims[1] << " " << vol.dims[2] << "\n";
  if (vol.dtype == Dtype::F32) h << "endian: little\n";
  h << "encoding: " << (encoding == Encoding::Raw ? "raw" : "gzip") << "\n";
  h << "space dimension: 3\n";
  h << "space directions: (" << format_float(vol.spacing[0]) << ",0,0) (0,"
    << format_float(vol.spacing[1]) << ",0) (0,0," << format_float(vol.spacing[2]) << ")\n";
  h << "space origin: (" << format_float(vol.origin[0]) << "," << format_float(vol.origin[1])
    << "," << format_float(vol.origin[2]) << ")\n";
  h << "\n";

  std::string header = h.str();
  std::vector<uint8_t> out(header.begin(), header.end());

  const uint8_t* raw;
  size_t raw_size;
  if (vol.dtype == Dtype::U8) {
    raw = vol.u8.data();
    raw_size = vol.u8.size();
  } else {
    raw = reinterpret_cast<const uint8_t*>(vol.f32.data());
    raw_size = vol.f32.size() * 4;
  }
  if (encoding == Encoding::Raw) {
    out.insert(out.end(), raw, raw + raw_size);
  } else {
    auto z = gzip_compress(raw, raw_size);
    out.insert(out.end(), z.begin(), z.end());
  }
  return out;
}

Volume binarize(const Volume& vol, float threshold) {
  vol.validate();
  Volume out;
  out.dims = vol.dims;
  out.spacing = vol.spacing;
  out.origin = vol.origin;
  out.dtype = Dtype::U8;
  int64_t n = vol.numel();
  out.u8.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) out.u8[i] = vol.value(i) > threshold ? 1 : 0;
  return out;
}

}  // namespace skullkit
