#include "skullkit/dataset.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "skullkit/rng.hpp"

namespace skullkit {

using ordered_json = nlohmann::ordered_json;

std::vector<const ManifestEntry*> DatasetManifest::split_entries(const std::string& split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (!e.skipped && e.split == split) out.push_back(&e);
  return out;
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  ordered_json arr = ordered_json::array();
  for (const auto& e : manifest.entries) {
    ordered_json j;
    j["id"] = e.id;
    j["split"] = e.split;
    j["complete"] = e.complete;
    j["defective"] = e.defective;
    j["implant"] = e.implant;
    j["defect_kind"] = e.defect_kind;
    j["seed"] = e.seed;
    if (e.skipped) {
      j["skipped"] = true;
      j["skip_reason"] = e.skip_reason;
    }
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& json_text) {
  ordered_json arr;
  try {
    arr = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::DataError, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!arr.is_array())
    throw Error(ErrorCode::DataError, "manifest must be a JSON array");

  DatasetManifest m;
  std::set<std::string> ids;
  for (const auto& j : arr) {
    ManifestEntry e;
    e.id = j.value("id", "");
    e.split = j.value("split", "");
    e.complete = j.value("complete", "");
    e.defective = j.value("defective", "");
    e.implant = j.value("implant", "");
    e.defect_kind = j.value("defect_kind", "");
    e.seed = j.value("seed", uint64_t{0});
    e.skipped = j.value("skipped", false);
    e.skip_reason = j.value("skip_reason", "");
    if (e.id.empty())
      throw Error(ErrorCode::DataError, "manifest entry without an id");
    if (!ids.insert(e.id).second)
      throw Error(ErrorCode::DataError, "duplicate manifest id '" + e.id + "'");
    if (!e.split.empty() && e.split != "train" && e.split != "val" && e.split != "test")
      throw Error(ErrorCode::DataError, "invalid split '" + e.split + "' for id '" + e.id + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files,
                              bool require_splits) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoError, "cannot open manifest '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  DatasetManifest m = manifest_from_json(text);

  auto base = path.parent_path();
  for (const auto& e : m.entries) {
    if (e.skipped) continue;
    if (require_splits && e.split.empty())
      throw Error(ErrorCode::DataError, "entry '" + e.id + "' has no split assignment");
    if (check_files) {
      for (const std::string* p : {&e.complete, &e.defective, &e.implant}) {
        if (p->empty()) continue;
        auto full = base / *p;
        if (!std::filesystem::exists(full))
          throw Error(ErrorCode::DataError,
                      "manifest references missing file '" + full.string() + "'");
      }
    }
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write manifest '" + path.string() + "'");
  f << manifest_to_json(manifest);
}

DatasetManifest split_dataset(const std::vector<std::string>& completes,
                              std::array<int64_t, 3> counts, uint64_t seed) {
  int64_t total = counts[0] + counts[1] + counts[2];
  if (total > static_cast<int64_t>(completes.size()))
    throw Error(ErrorCode::InsufficientData,
                "split asks for " + std::to_string(total) + " cases, only " +
                    std::to_string(completes.size()) + " available");

  std::vector<size_t> order(completes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x73706c69));
  rng.shuffle(order);

  DatasetManifest m;
  std::set<std::string> used_ids;
  for (int64_t k = 0; k < total; ++k) {
    const std::string& path = completes[order[static_cast<size_t>(k)]];
    ManifestEntry e;
    e.id = std::filesystem::path(path).stem().stem().string();  // strips .nii.gz / .nrrd
    std::string base = e.id;
    for (int suffix = 2; !used_ids.insert(e.id).second; ++suffix)
      e.id = base + "_" + std::to_string(suffix);
    e.complete = path;
    e.split = k < counts[0] ? "train" : (k < counts[0] + counts[1] ? "val" : "test");
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace skullkit
