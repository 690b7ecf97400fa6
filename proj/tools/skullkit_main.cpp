#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "skullkit/checkpoint.hpp"
#include "skullkit/defects.hpp"
#include "skullkit/registration.hpp"
#include "skullkit/trainer.hpp"
#include "skullkit/version.hpp"
#include "skullkit/volume_io.hpp"
#include "skullkit/voxel_ops.hpp"

namespace fs = std::filesystem;
using namespace skullkit;

namespace {

// exit codes: 0 success, 1 data/runtime error, 2 usage error
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

std::array<int64_t, 3> parse_dims(const std::string& text, const char* flag) {
  std::array<int64_t, 3> out{};
  if (std::sscanf(text.c_str(), "%ld,%ld,%ld", &out[0], &out[1], &out[2]) != 3)
    throw Error(ErrorCode::InvalidConfig,
                std::string(flag) + " expects three comma-separated integers, got '" + text + "'");
  return out;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_convert(const std::string& in_path, const std::string& out_path,
                const std::string& format_override, const std::string& encoding) {
  // extension problems are usage errors, not data errors
  try {
    if (format_override.empty()) format_from_path(in_path);
    format_from_path(out_path);
  } catch (const Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  std::vector<std::string> warnings;
  Volume vol;
  if (format_override.empty()) {
    vol = read_volume(in_path, &warnings);
  } else {
    auto bytes = read_file_bytes(in_path);
    vol = format_override == "nrrd" ? parse_nrrd(bytes, &warnings) : parse_nifti(bytes, &warnings);
  }
  print_warnings(warnings);
  if (encoding == "gzip" && format_from_path(out_path) == VolumeFormat::Nrrd) {
    write_file_bytes(out_path, write_nrrd(vol, Encoding::Gzip));
  } else {
    write_volume(vol, out_path);
  }
  std::cout << out_path << "\n";
  return kExitOk;
}

int cmd_phantom(uint64_t seed, const std::string& dims_text, const std::string& out_path,
                int count, const std::string& radii_text, double thickness, double jitter,
                const std::string& manifest_out) {
  PhantomSpec spec;
  spec.dims = parse_dims(dims_text, "--dims");
  if (!radii_text.empty()) {
    auto r = parse_dims(radii_text, "--radii");
    spec.radii = {static_cast<double>(r[0]), static_cast<double>(r[1]),
                  static_cast<double>(r[2])};
  } else {
    for (int a = 0; a < 3; ++a)
      spec.radii[a] = 0.36 * static_cast<double>(spec.dims[a]);
    spec.radii[2] *= 0.92;  // slightly flattened superiorly, breaks symmetry
    spec.face_width = 0.25 * static_cast<double>(spec.dims[0]);
    spec.face_depth = 0.08 * static_cast<double>(spec.dims[1]);
    spec.face_height = 0.20 * static_cast<double>(spec.dims[2]);
  }
  spec.shell_thickness = thickness;
  spec.jitter = jitter;

  fs::path base(out_path);
  DatasetManifest manifest;
  for (int i = 0; i < count; ++i) {
    spec.seed = seed + static_cast<uint64_t>(i);
    Volume phantom = make_phantom(spec);
    fs::path target = base;
    if (count > 1) {
      // insert an index before the volume extension: skull.nii.gz -> skull_003.nii.gz
      std::string name = base.filename().string();
      size_t dot = name.find('.');
      char idx[16];
      std::snprintf(idx, sizeof(idx), "_%03d", i);
      name = dot == std::string::npos ? name + idx : name.substr(0, dot) + idx + name.substr(dot);
      target = base.parent_path() / name;
    }
    if (!target.parent_path().empty()) fs::create_directories(target.parent_path());
    write_volume(phantom, target);
    std::cout << target.string() << "\n";

    ManifestEntry e;
    e.id = target.stem().stem().string();
    e.complete = target.filename().string();
    e.seed = spec.seed;
    manifest.entries.push_back(std::move(e));
  }
  if (!manifest_out.empty()) {
    save_manifest(manifest, manifest_out);
    std::cout << manifest_out << "\n";
  }
  return kExitOk;
}

PairBuildParams inject_params_from_spec_file(const std::string& spec_path) {
  PairBuildParams params;
  if (spec_path.empty()) return params;
  std::ifstream f(spec_path);
  if (!f) throw Error(ErrorCode::IoError, "cannot open spec '" + spec_path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("spec is not valid JSON: ") + e.what());
  }
  if (j.contains("counts")) {
    auto c = j["counts"].get<std::vector<int64_t>>();
    if (c.size() != 3) throw Error(ErrorCode::InvalidConfig, "counts must list 3 values");
    params.counts = {c[0], c[1], c[2]};
  }
  if (j.contains("max_retries")) params.max_retries = j["max_retries"].get<int>();
  if (j.contains("cranial")) {
    const auto& c = j["cranial"];
    if (c.contains("radius_frac")) params.cranial.radius_frac = c["radius_frac"].get<double>();
    if (c.contains("center_frac")) {
      auto v = c["center_frac"].get<std::vector<double>>();
      if (v.size() != 3) throw Error(ErrorCode::InvalidConfig, "center_frac must list 3 values");
      params.cranial.center_frac = std::array<double, 3>{v[0], v[1], v[2]};
    }
  }
  if (j.contains("facial")) {
    const auto& c = j["facial"];
    if (c.contains("plane_frac")) params.facial.plane_frac = c["plane_frac"].get<double>();
    if (c.contains("band_frac")) {
      auto v = c["band_frac"].get<std::vector<double>>();
      if (v.size() != 2) throw Error(ErrorCode::InvalidConfig, "band_frac must list 2 values");
      params.facial.band_frac = {v[0], v[1]};
    }
    if (c.contains("anterior_axis")) params.facial.anterior_axis = c["anterior_axis"].get<int>();
  }
  return params;
}

int cmd_inject(const std::string& manifest_in, const std::string& manifest_out,
               const std::string& kind, uint64_t seed, const std::string& spec_path,
               const std::string& counts_text) {
  PairBuildParams params = inject_params_from_spec_file(spec_path);
  params.seed = seed;
  if (kind == "cranial")
    params.kind_policy = KindPolicy::Cranial;
  else if (kind == "facial")
    params.kind_policy = KindPolicy::Facial;
  else
    params.kind_policy = KindPolicy::Mixed;
  if (!counts_text.empty()) {
    auto c = parse_dims(counts_text, "--counts");
    params.counts = c;
  }

  DatasetManifest input = load_manifest(manifest_in, /*check_files=*/true);
  build_pairs(input, fs::path(manifest_in).parent_path(), params, manifest_out);
  std::cout << manifest_out << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& resume_path,
              const std::string& manifest_override, int workers_override) {
  TrainConfig config = TrainConfig::from_file(config_path);
  if (!manifest_override.empty()) config.manifest = manifest_override;
  if (workers_override >= 0) config.workers = workers_override;
  if (config.manifest.empty())
    throw Error(ErrorCode::InvalidConfig,
                "no dataset manifest: set \"manifest\" in the config or pass --manifest");
  // manifest paths are resolved relative to the config file's directory
  fs::path manifest = fs::path(config.manifest);
  if (manifest.is_relative()) manifest = fs::path(config_path).parent_path() / manifest;

  std::optional<fs::path> resume;
  if (!resume_path.empty()) resume = fs::path(resume_path);
  train(manifest, config, &std::cerr, resume);
  std::cout << (fs::path(config.checkpoint_dir) / "last.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& manifest_path,
                 const std::string& split, const std::string& out_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  std::string report = evaluate(ckpt, manifest_path, split);
  if (out_path.empty()) {
    std::cout << report;
  } else {
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write report '" + out_path + "'");
    f << report;
    std::cout << out_path << "\n";
  }
  return kExitOk;
}

int cmd_reconstruct(const std::string& ckpt_path, const std::string& in_path,
                    const std::string& out_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  Volume defective = read_volume(in_path);
  Volume pred = reconstruct(ckpt, defective);
  write_volume(pred, out_path);
  std::cout << out_path << "\n";
  return kExitOk;
}

int cmd_extract_implant(const std::string& recon_path, const std::string& defect_path,
                        const std::string& out_implant, const std::string& out_transform,
                        double success_dice) {
  Volume recon = binarize(read_volume(recon_path), 0.5f);
  Volume defect = binarize(read_volume(defect_path), 0.5f);
  RegistrationConfig config;
  config.success_dice = success_dice;
  ImplantResult result = extract_implant(recon, defect, config);
  write_volume(result.implant, out_implant);
  if (!out_transform.empty()) {
    std::ofstream f(out_transform, std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write transform '" + out_transform + "'");
    f << result.registration.transform.to_json();
  }
  if (!result.registration.converged)
    std::cerr << "warning: registration did not converge (dice "
              << result.registration.dice << ")\n";
  nlohmann::ordered_json summary;
  summary["implant"] = out_implant;
  summary["registration_dice"] = result.registration.dice;
  summary["converged"] = result.registration.converged;
  std::cout << summary.dump() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skullkit: volumetric skull reconstruction toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("skullkit ") + SKULLKIT_VERSION +
                                        " (checkpoint format v" +
                                        std::to_string(kCheckpointFormatVersion) + ")");

  // convert
  auto* convert = app.add_subcommand("convert", "Convert between NRRD and NIfTI-1");
  std::string cv_in, cv_out, cv_format, cv_encoding = "raw";
  convert->add_option("--in", cv_in, "input volume (.nrrd/.nii/.nii.gz)")->required();
  convert->add_option("--out", cv_out, "output volume path")->required();
  convert->add_option("--format", cv_format, "force input format")
      ->check(CLI::IsMember({"nrrd", "nifti"}));
  convert->add_option("--encoding", cv_encoding, "NRRD payload encoding")
      ->check(CLI::IsMember({"raw", "gzip"}));

  // phantom
  auto* phantom = app.add_subcommand("phantom", "Generate synthetic skull phantoms");
  uint64_t ph_seed = 0;
  std::string ph_dims = "48,48,48", ph_out, ph_radii, ph_manifest;
  int ph_count = 1;
  double ph_thickness = 3.0, ph_jitter = 0.1;
  phantom->add_option("--seed", ph_seed, "base RNG seed")->required();
  phantom->add_option("--dims", ph_dims, "volume dims X,Y,Z");
  phantom->add_option("--out", ph_out, "output path (indexed when --count > 1)")->required();
  phantom->add_option("--count", ph_count, "number of phantoms (derived seeds seed+i)")
      ->check(CLI::PositiveNumber);
  phantom->add_option("--radii", ph_radii, "ellipsoid radii in voxels RX,RY,RZ");
  phantom->add_option("--thickness", ph_thickness, "shell thickness in voxels");
  phantom->add_option("--jitter", ph_jitter, "per-seed shrink fraction");
  phantom->add_option("--manifest-out", ph_manifest, "also write a completes manifest");

  // inject
  auto* inject = app.add_subcommand("inject", "Inject synthetic defects and build pairs");
  std::string in_manifest, out_manifest, in_kind = "both", in_spec, in_counts;
  uint64_t in_seed = 0;
  inject->add_option("--manifest-in", in_manifest, "manifest listing complete skulls")
      ->required();
  inject->add_option("--manifest-out", out_manifest, "output manifest path")->required();
  inject->add_option("--kind", in_kind, "defect kind for train/val entries")
      ->check(CLI::IsMember({"cranial", "facial", "both"}));
  inject->add_option("--seed", in_seed, "RNG seed");
  inject->add_option("--spec", in_spec, "JSON file with defect geometry and counts");
  inject->add_option("--counts", in_counts, "split counts TRAIN,VAL,TEST");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the autoencoder");
  std::string tr_config, tr_resume, tr_manifest;
  int tr_workers = -1;
  train_cmd->add_option("--config", tr_config, "TrainConfig JSON file")->required();
  train_cmd->add_option("--resume", tr_resume, "checkpoint to resume from");
  train_cmd->add_option("--manifest", tr_manifest, "override the config's manifest path");
  train_cmd->add_option("--workers", tr_workers, "override preprocessing worker count");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Dice report over a manifest split");
  std::string ev_ckpt, ev_manifest, ev_split = "test", ev_out;
  eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--manifest", ev_manifest, "dataset manifest")->required();
  eval_cmd->add_option("--split", ev_split, "split to evaluate")
      ->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--out", ev_out, "write the JSON report here instead of stdout");

  // reconstruct
  auto* rec_cmd = app.add_subcommand("reconstruct", "Predict a completed skull");
  std::string rc_ckpt, rc_in, rc_out;
  rec_cmd->add_option("--ckpt", rc_ckpt, "checkpoint path")->required();
  rec_cmd->add_option("--in", rc_in, "defective skull volume")->required();
  rec_cmd->add_option("--out", rc_out, "output volume path")->required();

  // extract-implant
  auto* ex_cmd = app.add_subcommand("extract-implant",
                                    "Register a reconstruction to the defective input and "
                                    "extract the implant by subtraction");
  std::string ex_recon, ex_defect, ex_implant, ex_transform;
  double ex_dice = 0.80;
  ex_cmd->add_option("--recon", ex_recon, "reconstructed (completed) skull")->required();
  ex_cmd->add_option("--defect", ex_defect, "defective input skull")->required();
  ex_cmd->add_option("--out-implant", ex_implant, "output implant volume")->required();
  ex_cmd->add_option("--out-transform", ex_transform, "output transform JSON");
  ex_cmd->add_option("--success-dice", ex_dice, "hard-dice threshold for convergence");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (convert->parsed()) return cmd_convert(cv_in, cv_out, cv_format, cv_encoding);
    if (phantom->parsed())
      return cmd_phantom(ph_seed, ph_dims, ph_out, ph_count, ph_radii, ph_thickness, ph_jitter,
                         ph_manifest);
    if (inject->parsed())
      return cmd_inject(in_manifest, out_manifest, in_kind, in_seed, in_spec, in_counts);
    if (train_cmd->parsed()) return cmd_train(tr_config, tr_resume, tr_manifest, tr_workers);
    if (eval_cmd->parsed()) return cmd_evaluate(ev_ckpt, ev_manifest, ev_split, ev_out);
    if (rec_cmd->parsed()) return cmd_reconstruct(rc_ckpt, rc_in, rc_out);
    if (ex_cmd->parsed())
      return cmd_extract_implant(ex_recon, ex_defect, ex_implant, ex_transform, ex_dice);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}
