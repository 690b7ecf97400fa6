#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "skullkit/volume.hpp"

namespace skullkit {

enum class Encoding { Raw, Gzip };
enum class VolumeFormat { Nrrd, Nifti1 };

// Parsers accept an optional sink for non-fatal header oddities
// (unknown NRRD fields, suspicious NIfTI values). nullptr discards them.
Volume parse_nrrd(const std::vector<uint8_t>& bytes,
                  std::vector<std::string>* warnings = nullptr);
std::vector<uint8_t> write_nrrd(const Volume& vol, Encoding encoding = Encoding::Raw);

Volume parse_nifti(const std::vector<uint8_t>& bytes,
                   std::vector<std::string>* warnings = nullptr);
std::vector<uint8_t> write_nifti(const Volume& vol, bool gzip = false);

Volume binarize(const Volume& vol, float threshold);

// File-level helpers. Format is sniffed from the extension
// (.nrrd / .nii / .nii.gz), or forced with the optional format argument.
VolumeFormat format_from_path(const std::filesystem::path& path);
Volume read_volume(const std::filesystem::path& path,
                   std::vector<std::string>* warnings = nullptr);
void write_volume(const Volume& vol, const std::filesystem::path& path);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

}  // namespace skullkit
