#include <doctest.h>

#include <fstream>
#include <sstream>

#include "skullkit/defects.hpp"
#include "skullkit/losses.hpp"
#include "skullkit/trainer.hpp"
#include "skullkit/volume_io.hpp"
#include "skullkit/voxel_ops.hpp"
#include "test_util.hpp"

using namespace skullkit;

namespace {

PhantomSpec tiny_phantom_spec(uint64_t seed) {
  PhantomSpec spec;
  spec.dims = {16, 16, 16};
  spec.radii = {5.5, 5.5, 5};
  spec.shell_thickness = 2;
  spec.face_width = 5;
  spec.face_depth = 2;
  spec.face_height = 4;
  spec.jitter = 0.1;
  spec.seed = seed;
  return spec;
}

// writes phantoms + defect pairs and returns the manifest path
std::filesystem::path make_dataset(const testutil::TempDir& tmp, int n_train, int n_val) {
  DatasetManifest completes;
  int total = n_train + n_val;
  for (int i = 0; i < total; ++i) {
    Volume v = make_phantom(tiny_phantom_spec(static_cast<uint64_t>(i * 13 + 1)));
    std::string name = "complete_" + std::to_string(i) + ".nii.gz";
    write_volume(v, tmp.path() / name);
    ManifestEntry e;
    e.id = "complete_" + std::to_string(i);
    e.complete = name;
    completes.entries.push_back(e);
  }
  PairBuildParams params;
  params.counts = {n_train, n_val, 0};
  params.seed = 11;
  params.kind_policy = KindPolicy::Cranial;
  params.cranial.radius_frac = 0.2;
  auto manifest_path = tmp.path() / "manifest.json";
  build_pairs(completes, tmp.path(), params, manifest_path);
  return manifest_path;
}

TrainConfig tiny_config(const std::filesystem::path& ckpt_dir) {
  TrainConfig cfg;
  cfg.model.channels = {4, 8};
  cfg.model.strides = {2, 2};
  cfg.resize = {16, 16, 16};
  cfg.lr = 5e-3f;
  cfg.batch_size = 2;
  cfg.epochs = 8;
  cfg.seed = 99;
  cfg.workers = 2;
  cfg.validate_every = 2;
  cfg.checkpoint_dir = ckpt_dir.string();
  return cfg;
}

}  // namespace

TEST_CASE("train config JSON round trip and validation") {
  TrainConfig cfg = tiny_config("ckpts");
  cfg.manifest = "manifest.json";
  TrainConfig back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.model == cfg.model);
  CHECK(back.resize == cfg.resize);
  CHECK(back.lr == cfg.lr);
  CHECK(back.seed == cfg.seed);
  CHECK(back.manifest == cfg.manifest);

  TrainConfig bad = cfg;
  bad.resize = {15, 16, 16};  // not divisible by stride product 4
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("InvalidConfig"), Error);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  Checkpoint ckpt;
  ckpt.config = tiny_config("x");
  ckpt.epoch = 3;
  ckpt.best_val_dice = 0.75;
  Model model(ckpt.config.model, ckpt.config.seed);
  ckpt.parameters = model.export_parameters();
  ckpt.optimizer = AdamState::for_parameters(model.parameters());
  ckpt.optimizer.step = 17;
  ckpt.optimizer.m[0][0] = 0.125f;
  ckpt.optimizer.v[2][1] = -3.5f;

  auto bytes = checkpoint_to_bytes(ckpt);
  Checkpoint back = checkpoint_from_bytes(bytes);
  CHECK(back.epoch == 3);
  CHECK(back.best_val_dice == 0.75);
  CHECK(back.optimizer.step == 17);
  CHECK(back.optimizer.m == ckpt.optimizer.m);
  CHECK(back.optimizer.v == ckpt.optimizer.v);
  CHECK(back.parameters == ckpt.parameters);
  CHECK(back.config.model == ckpt.config.model);

  // reloaded parameters drop into a model bit-exactly
  Model rebuilt = model_from_checkpoint(back);
  CHECK(rebuilt.parameter_hash() == model.parameter_hash());
}

TEST_CASE("corrupt and mismatched checkpoints are rejected") {
  Checkpoint ckpt;
  ckpt.config = tiny_config("x");
  Model model(ckpt.config.model, 1);
  ckpt.parameters = model.export_parameters();
  ckpt.optimizer = AdamState::for_parameters(model.parameters());
  auto bytes = checkpoint_to_bytes(ckpt);

  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  CHECK_THROWS_WITH_AS(checkpoint_from_bytes(truncated), doctest::Contains("CheckpointCorrupt"),
                       Error);

  auto garbage = std::vector<uint8_t>{'n', 'o', 'p', 'e', 1, 2, 3, 4, 5, 6, 7, 8};
  CHECK_THROWS_WITH_AS(checkpoint_from_bytes(garbage), doctest::Contains("CheckpointCorrupt"),
                       Error);

  auto version_bumped = bytes;
  version_bumped[4] = 99;  // u32 version little-endian low byte
  CHECK_THROWS_WITH_AS(checkpoint_from_bytes(version_bumped),
                       doctest::Contains("VersionMismatch"), Error);
}

TEST_CASE("training runs, logs the step format, and overfits a little") {
  testutil::TempDir tmp("train");
  auto manifest = make_dataset(tmp, 2, 1);
  TrainConfig cfg = tiny_config(tmp.path() / "ckpts");

  std::ostringstream log;
  Checkpoint ckpt = train(manifest, cfg, &log);
  CHECK(ckpt.epoch == cfg.epochs);

  std::string lines = log.str();
  CHECK(lines.find("epoch=1 step=1 loss=") != std::string::npos);
  CHECK(lines.find("val_dice=") != std::string::npos);

  // loss on the last epoch is lower than on the first
  auto first_loss = lines.substr(lines.find("loss=") + 5, 8);
  auto last_pos = lines.rfind("loss=");
  auto last_loss = lines.substr(last_pos + 5, 8);
  CHECK(std::stod(last_loss) < std::stod(first_loss));

  CHECK(std::filesystem::exists(tmp.path() / "ckpts" / "last.ckpt"));
  CHECK(std::filesystem::exists(tmp.path() / "ckpts" / "best.ckpt"));
}

TEST_CASE("training is deterministic across runs and worker counts") {
  testutil::TempDir tmp("train_det");
  auto manifest = make_dataset(tmp, 2, 0);

  TrainConfig cfg = tiny_config(tmp.path() / "a");
  cfg.epochs = 3;
  Checkpoint a = train(manifest, cfg, nullptr);

  TrainConfig cfg_b = cfg;
  cfg_b.checkpoint_dir = (tmp.path() / "b").string();
  Checkpoint b = train(manifest, cfg_b, nullptr);
  CHECK(a.parameters == b.parameters);
  CHECK(a.optimizer.m == b.optimizer.m);

  TrainConfig cfg_c = cfg;
  cfg_c.checkpoint_dir = (tmp.path() / "c").string();
  cfg_c.workers = 0;  // synchronous path must produce the same stream
  Checkpoint c = train(manifest, cfg_c, nullptr);
  CHECK(a.parameters == c.parameters);

  // checkpoint files from identical configs are byte-identical
  auto bytes_a = read_file_bytes(tmp.path() / "a" / "last.ckpt");
  auto bytes_b = read_file_bytes(tmp.path() / "b" / "last.ckpt");
  // configs differ only in checkpoint_dir, which is part of the snapshot;
  // compare the parameter blobs through parsed form instead
  CHECK(checkpoint_from_bytes(bytes_a).parameters == checkpoint_from_bytes(bytes_b).parameters);
}

TEST_CASE("missing data files raise DataError naming the path") {
  testutil::TempDir tmp("train_missing");
  auto manifest = make_dataset(tmp, 2, 0);
  auto victim = tmp.path() / "complete_0_defective.nii.gz";
  REQUIRE(std::filesystem::exists(victim));
  std::filesystem::remove(victim);

  TrainConfig cfg = tiny_config(tmp.path() / "ckpts");
  try {
    train(manifest, cfg, nullptr);
    FAIL("expected DataError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DataError);
    CHECK(std::string(e.what()).find("complete_0_defective.nii.gz") != std::string::npos);
  }
}

TEST_CASE("resume demands a compatible config") {
  testutil::TempDir tmp("resume");
  auto manifest = make_dataset(tmp, 2, 0);
  TrainConfig cfg = tiny_config(tmp.path() / "ckpts");
  cfg.epochs = 2;
  train(manifest, cfg, nullptr);
  auto last = tmp.path() / "ckpts" / "last.ckpt";

  // compatible resume continues cleanly
  TrainConfig more = cfg;
  more.epochs = 3;
  Checkpoint resumed = train(manifest, more, nullptr, last);
  CHECK(resumed.epoch == 3);

  TrainConfig different = more;
  different.model.channels = {8, 8};
  CHECK_THROWS_WITH_AS(train(manifest, different, nullptr, last),
                       doctest::Contains("ResumeMismatch"), Error);
}

TEST_CASE("resumed training reproduces the uninterrupted run bit-exactly") {
  testutil::TempDir tmp("resume_det");
  auto manifest = make_dataset(tmp, 2, 0);

  TrainConfig straight = tiny_config(tmp.path() / "s");
  straight.epochs = 4;
  Checkpoint full = train(manifest, straight, nullptr);

  TrainConfig half = tiny_config(tmp.path() / "h");
  half.epochs = 2;
  train(manifest, half, nullptr);
  TrainConfig rest = tiny_config(tmp.path() / "h");
  rest.epochs = 4;
  Checkpoint stitched =
      train(manifest, rest, nullptr, std::filesystem::path(half.checkpoint_dir) / "last.ckpt");
  CHECK(stitched.parameters == full.parameters);
  CHECK(stitched.optimizer.m == full.optimizer.m);
  CHECK(stitched.optimizer.v == full.optimizer.v);
}

TEST_CASE("reconstruct output matches the manual preprocessing pipeline") {
  testutil::TempDir tmp("parity");
  auto manifest = make_dataset(tmp, 2, 0);
  TrainConfig cfg = tiny_config(tmp.path() / "ckpts");
  cfg.epochs = 2;
  Checkpoint ckpt = train(manifest, cfg, nullptr);

  Volume defective = read_volume(tmp.path() / "complete_0_defective.nii.gz");
  Volume via_api = reconstruct(ckpt, defective);
  CHECK(via_api.dims == defective.dims);
  CHECK(via_api.dtype == Dtype::U8);
  CHECK(via_api.spacing == defective.spacing);
  CHECK(via_api.origin == defective.origin);

  // manual route through the exported transform functions
  Model model = model_from_checkpoint(ckpt);
  NoGradGuard off;
  Tensor input = preprocess_input(binarize(defective, cfg.binarize_threshold), cfg);
  Var logits = model.forward(make_leaf(std::move(input)));
  Volume pred = Volume::zeros(Dtype::U8, cfg.resize);
  int64_t v = pred.numel();
  for (int64_t i = 0; i < v; ++i) {
    float bg = logits->value.data[static_cast<size_t>(i)];
    float fg = logits->value.data[static_cast<size_t>(v + i)];
    pred.u8[static_cast<size_t>(i)] = fg > bg ? 1 : 0;
  }
  Volume manual = binarize(resize_area(pred, defective.dims), 0.5f);
  CHECK(manual.u8 == via_api.u8);
}

TEST_CASE("validation does not mutate parameters") {
  testutil::TempDir tmp("val_pure");
  auto manifest = make_dataset(tmp, 1, 2);
  TrainConfig cfg = tiny_config(tmp.path() / "ckpts");
  cfg.epochs = 1;
  cfg.validate_every = 1;
  Checkpoint ckpt = train(manifest, cfg, nullptr);

  // rerun with validation disabled: parameters must be identical
  TrainConfig no_val = cfg;
  no_val.checkpoint_dir = (tmp.path() / "ckpts2").string();
  no_val.validate_every = 1000000;
  Checkpoint ckpt2 = train(manifest, no_val, nullptr);
  CHECK(ckpt.parameters == ckpt2.parameters);
}

TEST_CASE("evaluate writes a structured report and rejects empty splits") {
  testutil::TempDir tmp("eval");
  auto manifest = make_dataset(tmp, 2, 1);
  TrainConfig cfg = tiny_config(tmp.path() / "ckpts");
  cfg.epochs = 2;
  Checkpoint ckpt = train(manifest, cfg, nullptr);

  std::string report = evaluate(ckpt, manifest, "train");
  CHECK(report.find("\"mean_dice_fg\"") != std::string::npos);
  CHECK(report.find("\"dice_border\"") != std::string::npos);
  CHECK(report.find("\"std_dice_both\"") != std::string::npos);
  CHECK(report.find("nan") == std::string::npos);

  CHECK_THROWS_WITH_AS(evaluate(ckpt, manifest, "test"),
                       doctest::Contains("InsufficientData"), Error);
}
