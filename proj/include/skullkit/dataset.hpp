#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "skullkit/error.hpp"

namespace skullkit {

struct ManifestEntry {
  std::string id;
  std::string split;      // "train" | "val" | "test"; "" while unassigned
  std::string complete;   // paths relative to the manifest file
  std::string defective;
  std::string implant;
  std::string defect_kind;  // "cranial" | "facial" | ""
  uint64_t seed = 0;
  bool skipped = false;     // defect injection gave up on this case
  std::string skip_reason;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split_entries(const std::string& split) const;
};

// check_files also verifies that referenced volume files exist (relative to
// the manifest's directory); require_splits enforces train/val/test labels.
DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files = true,
                              bool require_splits = false);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& json_text);

// Deterministic shuffled split of complete-skull entries into
// train/val/test by count. Test entries are flagged for both-defect-kind
// generation downstream.
DatasetManifest split_dataset(const std::vector<std::string>& completes,
                              std::array<int64_t, 3> counts, uint64_t seed);

}  // namespace skullkit
