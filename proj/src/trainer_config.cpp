#include "skullkit/trainer_config.hpp"

#include <fstream>

#include <json.hpp>

namespace skullkit {

using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  if (workers < 0) throw Error(ErrorCode::InvalidConfig, "workers must be >= 0");
  if (validate_every < 1) throw Error(ErrorCode::InvalidConfig, "validate_every must be >= 1");
  if (!(lr > 0.f)) throw Error(ErrorCode::InvalidConfig, "lr must be > 0");
  int64_t sp = model.stride_product();
  for (int a = 0; a < 3; ++a) {
    if (resize[a] < 1) throw Error(ErrorCode::InvalidConfig, "resize dims must be >= 1");
    if (resize[a] % sp != 0)
      throw Error(ErrorCode::InvalidConfig,
                  "resize dim " + std::to_string(resize[a]) +
                      " is not divisible by the stride product " + std::to_string(sp));
  }
}

std::string TrainConfig::to_json() const {
  ordered_json j;
  j["model"] = {{"spatial_dims", model.spatial_dims},
                {"in_channels", model.in_channels},
                {"out_channels", model.out_channels},
                {"channels", model.channels},
                {"strides", model.strides},
                {"num_res_units", model.num_res_units},
                {"activation", model.activation}};
  j["resize"] = {resize[0], resize[1], resize[2]};
  j["lr"] = lr;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["workers"] = workers;
  j["checkpoint_dir"] = checkpoint_dir;
  j["validate_every"] = validate_every;
  j["manifest"] = manifest;
  j["binarize_threshold"] = binarize_threshold;
  return j.dump(2) + "\n";
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  TrainConfig c;
  try {
    if (j.contains("model")) {
      const auto& m = j["model"];
      c.model.spatial_dims = m.value("spatial_dims", 3);
      c.model.in_channels = m.value("in_channels", 1);
      c.model.out_channels = m.value("out_channels", 2);
      if (m.contains("channels")) c.model.channels = m["channels"].get<std::vector<int>>();
      if (m.contains("strides")) c.model.strides = m["strides"].get<std::vector<int>>();
      c.model.num_res_units = m.value("num_res_units", 0);
      c.model.activation = m.value("activation", std::string("prelu"));
    }
    if (j.contains("resize")) {
      auto r = j["resize"].get<std::vector<int64_t>>();
      if (r.size() != 3)
        throw Error(ErrorCode::InvalidConfig, "resize must list 3 dims");
      c.resize = {r[0], r[1], r[2]};
    }
    c.lr = j.value("lr", 1e-3f);
    c.batch_size = j.value("batch_size", 2);
    c.epochs = j.value("epochs", 10);
    c.seed = j.value("seed", uint64_t{0});
    c.workers = j.value("workers", 2);
    c.checkpoint_dir = j.value("checkpoint_dir", std::string("checkpoints"));
    c.validate_every = j.value("validate_every", 1);
    c.manifest = j.value("manifest", std::string());
    c.binarize_threshold = j.value("binarize_threshold", 0.5f);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json(text);
}

bool TrainConfig::resume_compatible(const TrainConfig& other) const {
  return model == other.model && resize == other.resize && lr == other.lr &&
         batch_size == other.batch_size && seed == other.seed &&
         binarize_threshold == other.binarize_threshold;
}

}  // namespace skullkit
