#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "skullkit/gzip.hpp"
#include "skullkit/version.hpp"
#include "skullkit/volume_io.hpp"

static_assert(std::endian::native == std::endian::little,
              "volume_io emits little-endian NIfTI headers via memcpy");

namespace skullkit {

namespace {

constexpr int16_t kDtUint8 = 2;
constexpr int16_t kDtFloat32 = 16;

#pragma pack(push, 1)
struct Nifti1Header {
  int32_t sizeof_hdr;     // offset 0, must be 348
  char data_type[10];     // 4
  char db_name[18];       // 14
  int32_t extents;        // 32
  int16_t session_error;  // 36
  char regular;           // 38
  char dim_info;          // 39
  int16_t dim[8];         // 40
  float intent_p1;        // 56
  float intent_p2;        // 60
  float intent_p3;        // 64
  int16_t intent_code;    // 68
  int16_t datatype;       // 70
  int16_t bitpix;         // 72
  int16_t slice_start;    // 74
  float pixdim[8];        // 76
  float vox_offset;       // 108
  float scl_slope;        // 112
  float scl_inter;        // 116
  int16_t slice_end;      // 120
  char slice_code;        // 122
  char xyzt_units;        // 123
  float cal_max;          // 124
  float cal_min;          // 128
  float slice_duration;   // 132
  float toffset;          // 136
  int32_t glmax;          // 140
  int32_t glmin;          // 144
  char descrip[80];       // 148
  char aux_file[24];      // 228
  int16_t qform_code;     // 252
  int16_t sform_code;     // 254
  float quatern_b;        // 256
  float quatern_c;        // 260
  float quatern_d;        // 264
  float qoffset_x;        // 268
  float qoffset_y;        // 272
  float qoffset_z;        // 276
  float srow_x[4];        // 280
  float srow_y[4];        // 296
  float srow_z[4];        // 312
  char intent_name[16];   // 328
  char magic[4];          // 344
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

template <typename T>
void swap_field(T& v) {
  auto* p = reinterpret_cast<uint8_t*>(&v);
  for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
}

void swap_header(Nifti1Header& h) {
  swap_field(h.sizeof_hdr);
  swap_field(h.extents);
  swap_field(h.session_error);
  for (auto& d : h.dim) swap_field(d);
  swap_field(h.intent_p1);
  swap_field(h.intent_p2);
  swap_field(h.intent_p3);
  swap_field(h.intent_code);
  swap_field(h.datatype);
  swap_field(h.bitpix);
  swap_field(h.slice_start);
  for (auto& p : h.pixdim) swap_field(p);
  swap_field(h.vox_offset);
  swap_field(h.scl_slope);
  swap_field(h.scl_inter);
  swap_field(h.slice_end);
  swap_field(h.cal_max);
  swap_field(h.cal_min);
  swap_field(h.slice_duration);
  swap_field(h.toffset);
  swap_field(h.glmax);
  swap_field(h.glmin);
  swap_field(h.qform_code);
  swap_field(h.sform_code);
  swap_field(h.quatern_b);
  swap_field(h.quatern_c);
  swap_field(h.quatern_d);
  swap_field(h.qoffset_x);
  swap_field(h.qoffset_y);
  swap_field(h.qoffset_z);
  for (auto& v : h.srow_x) swap_field(v);
  for (auto& v : h.srow_y) swap_field(v);
  for (auto& v : h.srow_z) swap_field(v);
}

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 quaternion_to_matrix(double b, double c, double d, double qfac) {
  double a2 = 1.0 - (b * b + c * c + d * d);
  double a = a2 > 0.0 ? std::sqrt(a2) : 0.0;
  Mat3 r{{{a * a + b * b - c * c - d * d, 2 * b * c - 2 * a * d, 2 * b * d + 2 * a * c},
          {2 * b * c + 2 * a * d, a * a + c * c - b * b - d * d, 2 * c * d - 2 * a * b},
          {2 * b * d - 2 * a * c, 2 * c * d + 2 * a * b, a * a + d * d - c * c - b * b}}};
  for (int i = 0; i < 3; ++i) r[i][2] *= qfac;
  return r;
}

// Axis-aligned means a signed permutation: one entry of magnitude ~1 per
// row/column, everything else ~0. Orientation beyond origin+spacing is
// dropped, so anything else is rejected rather than silently mangled.
bool is_signed_permutation(const Mat3& r, double tol = 1e-4) {
  for (int i = 0; i < 3; ++i) {
    int big = 0;
    for (int j = 0; j < 3; ++j) {
      double m = std::fabs(r[i][j]);
      if (m > 1.0 - tol && m < 1.0 + tol)
        ++big;
      else if (m > tol)
        return false;
    }
    if (big != 1) return false;
  }
  return true;
}

void byteswap_f32(std::vector<float>& values) {
  for (float& v : values) swap_field(v);
}

}  // namespace

Volume parse_nifti(const std::vector<uint8_t>& raw_bytes, std::vector<std::string>* warnings) {
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };

  const std::vector<uint8_t>* bytes = &raw_bytes;
  std::vector<uint8_t> inflated;
  if (is_gzip(raw_bytes)) {
    inflated = gzip_decompress(raw_bytes);
    bytes = &inflated;
  }

  if (bytes->size() < sizeof(Nifti1Header))
    throw Error(ErrorCode::TruncatedPayload,
                "file holds " + std::to_string(bytes->size()) + " bytes, header needs 348");

  Nifti1Header h;
  std::memcpy(&h, bytes->data(), sizeof(h));
  bool swapped = false;
  if (h.sizeof_hdr != 348) {
    swap_header(h);
    swapped = true;
    if (h.sizeof_hdr != 348)
      throw Error(ErrorCode::BadMagic, "sizeof_hdr is not 348 in either byte order");
  }

  if (std::memcmp(h.magic, "n+1\0", 4) != 0) {
    if (std::memcmp(h.magic, "ni1\0", 4) == 0)
      throw Error(ErrorCode::BadMagic, "detached-header NIfTI ('ni1') is not supported");
    throw Error(ErrorCode::BadMagic, "missing 'n+1' magic");
  }

  if (h.dim[0] != 3)
    throw Error(ErrorCode::UnsupportedFeature,
                "only 3D volumes are supported, got dim[0]=" + std::to_string(h.dim[0]));

  std::array<int64_t, 3> dims{};
  for (int i = 0; i < 3; ++i) {
    if (h.dim[i + 1] < 1)
      throw Error(ErrorCode::MalformedHeader,
                  "dim[" + std::to_string(i + 1) + "] must be >= 1");
    dims[i] = h.dim[i + 1];
  }

  Dtype dtype;
  if (h.datatype == kDtUint8)
    dtype = Dtype::U8;
  else if (h.datatype == kDtFloat32)
    dtype = Dtype::F32;
  else
    throw Error(ErrorCode::UnsupportedDatatype,
                "datatype code " + std::to_string(h.datatype) +
                    " (only uint8 and float32 are supported)");
  int expected_bitpix = dtype == Dtype::U8 ? 8 : 32;
  if (h.bitpix != expected_bitpix)
    warn("bitpix " + std::to_string(h.bitpix) + " disagrees with datatype; trusting datatype");

  std::array<float, 3> spacing{};
  for (int i = 0; i < 3; ++i) {
    float p = h.pixdim[i + 1];
    if (!(p > 0.f) || !std::isfinite(p)) {
      warn("pixdim[" + std::to_string(i + 1) + "] is not positive; using 1.0");
      p = 1.f;
    }
    spacing[i] = p;
  }

  std::array<float, 3> origin{0.f, 0.f, 0.f};
  if (h.qform_code > 0) {
    double qfac = h.pixdim[0] < 0.f ? -1.0 : 1.0;
    Mat3 r = quaternion_to_matrix(h.quatern_b, h.quatern_c, h.quatern_d, qfac);
    if (!is_signed_permutation(r))
      throw Error(ErrorCode::UnsupportedFeature,
                  "qform rotation is not axis-aligned; oblique volumes are not supported");
    origin = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
  } else if (h.sform_code > 0) {
    const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    Mat3 r{};
    std::array<double, 3> col_norm{0, 0, 0};
    for (int j = 0; j < 3; ++j) {
      for (int i = 0; i < 3; ++i) col_norm[j] += double(rows[i][j]) * rows[i][j];
      col_norm[j] = std::sqrt(col_norm[j]);
      if (!(col_norm[j] > 0.0))
        throw Error(ErrorCode::MalformedHeader, "sform has a zero column");
      for (int i = 0; i < 3; ++i) r[i][j] = rows[i][j] / col_norm[j];
    }
    if (!is_signed_permutation(r))
      throw Error(ErrorCode::UnsupportedFeature,
                  "sform is not axis-aligned; oblique volumes are not supported");
    for (int j = 0; j < 3; ++j) spacing[j] = static_cast<float>(col_norm[j]);
    origin = {rows[0][3], rows[1][3], rows[2][3]};
  }
  // both codes zero: identity orientation, pixdim spacing, origin 0

  if (!std::isfinite(h.vox_offset) || h.vox_offset < 348.f)
    throw Error(ErrorCode::MalformedHeader,
                "vox_offset " + std::to_string(h.vox_offset) + " is below the header size");
  size_t offset = static_cast<size_t>(h.vox_offset);

  size_t voxels = static_cast<size_t>(dims[0]) * dims[1] * dims[2];
  size_t value_size = dtype == Dtype::U8 ? 1 : 4;
  if (offset + voxels * value_size > bytes->size())
    throw Error(ErrorCode::TruncatedPayload,
                "payload needs " + std::to_string(voxels * value_size) + " bytes at offset " +
                    std::to_string(offset) + ", file holds " + std::to_string(bytes->size()));

  if (h.scl_slope != 0.f && h.scl_slope != 1.f)
    warn("scl_slope is ignored; voxel values are read as stored");

  Volume vol;
  vol.dims = dims;
  vol.spacing = spacing;
  vol.origin = origin;
  vol.dtype = dtype;
  if (dtype == Dtype::U8) {
    vol.u8.assign(bytes->begin() + static_cast<ptrdiff_t>(offset),
                  bytes->begin() + static_cast<ptrdiff_t>(offset + voxels));
  } else {
    vol.f32.resize(voxels);
    std::memcpy(vol.f32.data(), bytes->data() + offset, voxels * 4);
    if (swapped) byteswap_f32(vol.f32);
  }
  vol.validate();
  return vol;
}

std::vector<uint8_t> write_nifti(const Volume& vol, bool gzip) {
  vol.validate();
  Nifti1Header h;
  std::memset(&h, 0, sizeof(h));
  h.sizeof_hdr = 348;
  h.dim[0] = 3;
  for (int i = 0; i < 3; ++i) h.dim[i + 1] = static_cast<int16_t>(vol.dims[i]);
  for (int i = 4; i < 8; ++i) h.dim[i] = 1;
  h.datatype = vol.dtype == Dtype::U8 ? kDtUint8 : kDtFloat32;
  h.bitpix = vol.dtype == Dtype::U8 ? 8 : 32;
  h.pixdim[0] = 1.f;  // qfac
  for (int i = 0; i < 3; ++i) h.pixdim[i + 1] = vol.spacing[i];
  h.vox_offset = 352.f;
  h.scl_slope = 1.f;
  h.xyzt_units = 2;  // millimetres
  std::snprintf(h.descrip, sizeof(h.descrip), "skullkit %s", SKULLKIT_VERSION);
  h.qform_code = 1;
  h.quatern_b = h.quatern_c = h.quatern_d = 0.f;  // identity rotation
  h.qoffset_x = vol.origin[0];
  h.qoffset_y = vol.origin[1];
  h.qoffset_z = vol.origin[2];
  h.sform_code = 1;
  h.srow_x[0] = vol.spacing[0];
  h.srow_x[3] = vol.origin[0];
  h.srow_y[1] = vol.spacing[1];
  h.srow_y[3] = vol.origin[1];
  h.srow_z[2] = vol.spacing[2];
  h.srow_z[3] = vol.origin[2];
  std::memcpy(h.magic, "n+1\0", 4);

  std::vector<uint8_t> out(352, 0);  // 348-byte header + 4-byte empty extension flag
  std::memcpy(out.data(), &h, sizeof(h));
  if (vol.dtype == Dtype::U8) {
    out.insert(out.end(), vol.u8.begin(), vol.u8.end());
  } else {
    const auto* p = reinterpret_cast<const uint8_t*>(vol.f32.data());
    out.insert(out.end(), p, p + vol.f32.size() * 4);
  }
  if (gzip) return gzip_compress(out);
  return out;
}

VolumeFormat format_from_path(const std::filesystem::path& path) {
  std::string name = path.filename().string();
  auto ends_with = [&](const char* suffix) {
    size_t n = std::strlen(suffix);
    return name.size() >= n &&
           std::equal(name.end() - static_cast<ptrdiff_t>(n), name.end(), suffix,
                      [](char a, char b) { return std::tolower(a) == b; });
  };
  if (ends_with(".nrrd")) return VolumeFormat::Nrrd;
  if (ends_with(".nii") || ends_with(".nii.gz")) return VolumeFormat::Nifti1;
  throw Error(ErrorCode::UnsupportedFeature,
              "cannot infer volume format from '" + name + "' (expected .nrrd/.nii/.nii.gz)");
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (f.bad()) throw Error(ErrorCode::IoError, "read failed for '" + path.string() + "'");
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

Volume read_volume(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  auto bytes = read_file_bytes(path);
  switch (format_from_path(path)) {
    case VolumeFormat::Nrrd:
      return parse_nrrd(bytes, warnings);
    case VolumeFormat::Nifti1:
      return parse_nifti(bytes, warnings);
  }
  throw Error(ErrorCode::UnsupportedFeature, "unreachable format");
}

void write_volume(const Volume& vol, const std::filesystem::path& path) {
  std::string name = path.filename().string();
  bool gz = name.size() > 3 && name.compare(name.size() - 3, 3, ".gz") == 0;
  switch (format_from_path(path)) {
    case VolumeFormat::Nrrd:
      write_file_bytes(path, write_nrrd(vol, gz ? Encoding::Gzip : Encoding::Raw));
      return;
    case VolumeFormat::Nifti1:
      write_file_bytes(path, write_nifti(vol, gz));
      return;
  }
}

}  // namespace skullkit
