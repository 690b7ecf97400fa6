#include "skullkit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "skullkit/version.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written little-endian via memcpy");

namespace skullkit {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'R', 'C'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  size_t n = out.size();
  out.resize(n + 4);
  std::memcpy(out.data() + n, &v, 4);
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  size_t n = out.size();
  out.resize(n + 8);
  std::memcpy(out.data() + n, &v, 8);
}

void put_f32s(std::vector<uint8_t>& out, const std::vector<float>& v) {
  size_t n = out.size();
  out.resize(n + v.size() * 4);
  std::memcpy(out.data() + n, v.data(), v.size() * 4);
}

struct Reader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > bytes.size())
      throw Error(ErrorCode::CheckpointCorrupt, "checkpoint truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v;
    std::memcpy(&v, bytes.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::vector<float> f32s(size_t count) {
    need(count * 4);
    std::vector<float> v(count);
    std::memcpy(v.data(), bytes.data() + pos, count * 4);
    pos += count * 4;
    return v;
  }
  std::string str(size_t count) {
    need(count);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), count);
    pos += count;
    return s;
  }
};

}  // namespace

// Per-parameter sizes are not stored in the file; they are implied by the
// model config snapshot, so the optimizer and parameter blobs are plain
// little-endian f32 runs in declaration order.
std::vector<size_t> parameter_sizes(const TrainConfig& config) {
  Model pattern(config.model, 0);
  std::vector<size_t> sizes;
  for (const auto& p : pattern.parameters()) sizes.push_back(p->value.data.size());
  return sizes;
}

std::vector<uint8_t> checkpoint_to_bytes(const Checkpoint& ckpt) {
  nlohmann::ordered_json meta;
  meta["train_config"] = nlohmann::ordered_json::parse(ckpt.config.to_json());
  meta["epoch"] = ckpt.epoch;
  meta["best_val_dice"] = ckpt.best_val_dice;
  std::string config_json = meta.dump();

  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, static_cast<uint32_t>(kCheckpointFormatVersion));
  put_u64(out, config_json.size());
  out.insert(out.end(), config_json.begin(), config_json.end());

  // optimizer state blob: step count, then m and v runs per parameter
  put_u64(out, static_cast<uint64_t>(ckpt.optimizer.step));
  for (size_t i = 0; i < ckpt.optimizer.m.size(); ++i) {
    put_f32s(out, ckpt.optimizer.m[i]);
    put_f32s(out, ckpt.optimizer.v[i]);
  }

  // parameter blob, declaration order
  for (const auto& p : ckpt.parameters) put_f32s(out, p);
  return out;
}

Checkpoint checkpoint_from_bytes(const std::vector<uint8_t>& bytes) {
  Reader r{bytes};
  std::string magic = r.str(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::CheckpointCorrupt, "bad checkpoint magic");
  uint32_t version = r.u32();
  if (version != static_cast<uint32_t>(kCheckpointFormatVersion))
    throw Error(ErrorCode::VersionMismatch,
                "checkpoint format version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointFormatVersion));
  uint64_t json_len = r.u64();
  if (json_len > bytes.size())
    throw Error(ErrorCode::CheckpointCorrupt, "config length exceeds file size");
  std::string config_json = r.str(json_len);

  Checkpoint ckpt;
  try {
    auto meta = nlohmann::json::parse(config_json);
    ckpt.config = TrainConfig::from_json(meta.at("train_config").dump());
    ckpt.epoch = meta.value("epoch", int64_t{0});
    ckpt.best_val_dice = meta.value("best_val_dice", -1.0);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::CheckpointCorrupt, std::string("bad config block: ") + e.what());
  }

  std::vector<size_t> sizes = parameter_sizes(ckpt.config);
  size_t total = 0;
  for (size_t s : sizes) total += s;
  size_t expected = r.pos + 8 + total * 3 * 4;  // step + (m, v, params) per value
  if (bytes.size() != expected)
    throw Error(ErrorCode::CheckpointCorrupt,
                "file holds " + std::to_string(bytes.size()) + " bytes, config implies " +
                    std::to_string(expected));

  ckpt.optimizer.step = static_cast<int64_t>(r.u64());
  for (size_t s : sizes) {
    ckpt.optimizer.m.push_back(r.f32s(s));
    ckpt.optimizer.v.push_back(r.f32s(s));
  }
  for (size_t s : sizes) ckpt.parameters.push_back(r.f32s(s));
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  auto bytes = checkpoint_to_bytes(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write checkpoint '" + tmp.string() + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(ErrorCode::IoError, "checkpoint write failed");
  }
  std::filesystem::rename(tmp, path);  // atomic publish
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open checkpoint '" + path.string() + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model model(ckpt.config.model, ckpt.config.seed);
  model.import_parameters(ckpt.parameters);
  return model;
}

}  // namespace skullkit
