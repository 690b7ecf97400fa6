#include "skullkit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>
#include <vector>

#include <json.hpp>

#include "skullkit/losses.hpp"
#include "skullkit/rng.hpp"
#include "skullkit/volume_io.hpp"
#include "skullkit/voxel_ops.hpp"

namespace skullkit {

Tensor preprocess_input(const Volume& defective, const TrainConfig& config) {
  Volume bin = binarize(defective, config.binarize_threshold);
  Volume resized = resize_area(bin, config.resize);
  // Volume is x-fastest, tensors are W-fastest: (D,H,W) = (z,y,x) keeps the
  // linear layouts identical, no shuffling needed.
  Tensor t({1, 1, config.resize[2], config.resize[1], config.resize[0]});
  std::copy(resized.f32.begin(), resized.f32.end(), t.data.begin());
  return t;
}

Tensor preprocess_target(const Volume& complete, const TrainConfig& config) {
  Volume bin = binarize(complete, config.binarize_threshold);
  Volume resized = resize_area(bin, config.resize);
  Volume rebin = binarize(resized, 0.5f);
  Tensor t({1, 2, config.resize[2], config.resize[1], config.resize[0]});
  size_t n = rebin.u8.size();
  for (size_t i = 0; i < n; ++i) {
    float fg = rebin.u8[i] ? 1.f : 0.f;
    t.data[i] = 1.f - fg;  // channel 0: background
    t.data[n + i] = fg;    // channel 1: foreground
  }
  return t;
}

namespace {

struct TrainSample {
  Tensor input;   // (1, 1, D, H, W)
  Tensor target;  // (1, 2, D, H, W)
};

// Bounded, sequence-numbered worker pool: jobs run concurrently, results are
// delivered strictly in job order, so training consumes an identical stream
// for any worker count.
class SamplePipeline {
 public:
  SamplePipeline(std::vector<std::function<TrainSample()>> jobs, int workers, size_t lookahead)
      : jobs_(std::move(jobs)), lookahead_(std::max<size_t>(lookahead, 1)) {
    if (workers <= 0) return;
    int n = std::min<int>(workers, static_cast<int>(jobs_.size()));
    for (int i = 0; i < n; ++i)
      threads_.emplace_back([this] { worker_loop(); });
  }

  ~SamplePipeline() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      cancelled_ = true;
    }
    cv_workers_.notify_all();
    for (auto& t : threads_) t.join();
  }

  TrainSample next() {
    if (threads_.empty()) {
      // synchronous fallback (workers == 0)
      return jobs_[next_out_++]();
    }
    std::unique_lock<std::mutex> lk(mu_);
    cv_consumer_.wait(lk, [&] { return ready_.count(next_out_) || errors_.count(next_out_); });
    if (auto it = errors_.find(next_out_); it != errors_.end()) {
      auto err = it->second;
      ++next_out_;
      cv_workers_.notify_all();
      std::rethrow_exception(err);
    }
    TrainSample s = std::move(ready_.at(next_out_));
    ready_.erase(next_out_);
    ++next_out_;
    cv_workers_.notify_all();
    return s;
  }

 private:
  void worker_loop() {
    while (true) {
      size_t idx;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_workers_.wait(lk, [&] {
          return cancelled_ ||
                 (next_in_ < jobs_.size() && next_in_ < next_out_ + lookahead_);
        });
        if (cancelled_) return;
        idx = next_in_++;
      }
      try {
        TrainSample s = jobs_[idx]();
        std::lock_guard<std::mutex> lk(mu_);
        ready_.emplace(idx, std::move(s));
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu_);
        errors_.emplace(idx, std::current_exception());
      }
      cv_consumer_.notify_all();
    }
  }

  std::vector<std::function<TrainSample()>> jobs_;
  size_t lookahead_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_workers_, cv_consumer_;
  std::map<size_t, TrainSample> ready_;
  std::map<size_t, std::exception_ptr> errors_;
  size_t next_in_ = 0;
  size_t next_out_ = 0;
  bool cancelled_ = false;
};

Volume load_binary_volume(const std::filesystem::path& path, float threshold) {
  Volume v;
  try {
    v = read_volume(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError || e.code() == ErrorCode::DataError) throw;
    throw Error(ErrorCode::DataError, "cannot parse '" + path.string() + "': " + e.what());
  }
  return binarize(v, threshold);
}

Tensor stack_batch(const std::vector<Tensor>& items) {
  const auto& s = items.front().shape;
  Tensor out({static_cast<int64_t>(items.size()), s[1], s[2], s[3], s[4]});
  size_t per = items.front().data.size();
  for (size_t i = 0; i < items.size(); ++i)
    std::copy(items[i].data.begin(), items[i].data.end(), out.data.begin() + static_cast<ptrdiff_t>(i * per));
  return out;
}

// argmax over the 2 channels of one batch item -> binary volume on the
// training grid
Volume logits_to_binary(const Tensor& logits, int64_t item, std::array<int64_t, 3> dims) {
  Volume out = Volume::zeros(Dtype::U8, dims);
  int64_t v = dims[0] * dims[1] * dims[2];
  const int64_t c0 = logits.index(item, 0, 0, 0, 0);
  const int64_t c1 = logits.index(item, 1, 0, 0, 0);
  for (int64_t i = 0; i < v; ++i)
    out.u8[static_cast<size_t>(i)] =
        logits.data[static_cast<size_t>(c1 + i)] > logits.data[static_cast<size_t>(c0 + i)] ? 1
                                                                                            : 0;
  return out;
}

struct ResolvedEntry {
  std::string id;
  std::filesystem::path complete;
  std::filesystem::path defective;
  std::filesystem::path implant;  // may be empty
};

std::vector<ResolvedEntry> resolve_split(const DatasetManifest& manifest,
                                         const std::filesystem::path& manifest_path,
                                         const std::string& split) {
  auto base = manifest_path.parent_path();
  std::vector<ResolvedEntry> out;
  for (const auto* e : manifest.split_entries(split)) {
    ResolvedEntry r;
    r.id = e->id;
    r.complete = base / e->complete;
    if (!e->defective.empty()) r.defective = base / e->defective;
    if (!e->implant.empty()) r.implant = base / e->implant;
    out.push_back(std::move(r));
  }
  return out;
}

double validate_split(const Model& model, const TrainConfig& config,
                      const std::vector<ResolvedEntry>& entries, double* dice_both_out) {
  NoGradGuard no_grad;
  double sum_fg = 0.0, sum_both = 0.0;
  for (const auto& e : entries) {
    Volume defective = load_binary_volume(e.defective, config.binarize_threshold);
    Volume complete = load_binary_volume(e.complete, config.binarize_threshold);
    Tensor input = preprocess_input(defective, config);
    Tensor target = preprocess_target(complete, config);
    Var logits = model.forward(make_leaf(std::move(input)));
    Volume pred = logits_to_binary(logits->value, 0, config.resize);
    Volume truth = Volume::zeros(Dtype::U8, config.resize);
    size_t n = truth.u8.size();
    for (size_t i = 0; i < n; ++i) truth.u8[i] = target.data[n + i] > 0.5f ? 1 : 0;
    double fg = dice_metric(pred, truth);
    // background dice via complements
    Volume pred_bg = pred, truth_bg = truth;
    for (size_t i = 0; i < n; ++i) {
      pred_bg.u8[i] = 1 - pred.u8[i];
      truth_bg.u8[i] = 1 - truth.u8[i];
    }
    double bg = dice_metric(pred_bg, truth_bg);
    sum_fg += fg;
    sum_both += (fg + bg) / 2.0;
  }
  double mean_fg = sum_fg / static_cast<double>(entries.size());
  if (dice_both_out) *dice_both_out = sum_both / static_cast<double>(entries.size());
  return mean_fg;
}

}  // namespace

Checkpoint train(const std::filesystem::path& manifest_path, const TrainConfig& config,
                 std::ostream* log, const std::optional<std::filesystem::path>& resume) {
  config.validate();
  DatasetManifest manifest = load_manifest(manifest_path, /*check_files=*/true,
                                           /*require_splits=*/true);
  auto train_entries = resolve_split(manifest, manifest_path, "train");
  auto val_entries = resolve_split(manifest, manifest_path, "val");
  if (train_entries.empty())
    throw Error(ErrorCode::InsufficientData, "manifest has no train entries");

  Model model(config.model, config.seed);
  AdamState opt = AdamState::for_parameters(model.parameters());
  AdamConfig adam{config.lr};
  int64_t start_epoch = 0;
  double best_val = -1.0;

  if (resume) {
    Checkpoint ckpt = load_checkpoint(*resume);
    if (!ckpt.config.resume_compatible(config))
      throw Error(ErrorCode::ResumeMismatch,
                  "checkpoint was trained with a different model/preprocessing config");
    model.import_parameters(ckpt.parameters);
    opt = ckpt.optimizer;
    start_epoch = ckpt.epoch;
    best_val = ckpt.best_val_dice;
  }

  std::filesystem::create_directories(config.checkpoint_dir);
  auto last_path = std::filesystem::path(config.checkpoint_dir) / "last.ckpt";
  auto best_path = std::filesystem::path(config.checkpoint_dir) / "best.ckpt";

  auto snapshot = [&](int64_t epoch_done) {
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.epoch = epoch_done;
    ckpt.best_val_dice = best_val;
    ckpt.optimizer = opt;
    ckpt.parameters = model.export_parameters();
    return ckpt;
  };

  Checkpoint final_ckpt = snapshot(start_epoch);
  for (int64_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
    std::vector<size_t> order(train_entries.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(mix_seed(config.seed, 0x65706f63), static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    std::vector<std::function<TrainSample()>> jobs;
    jobs.reserve(order.size());
    for (size_t idx : order) {
      const ResolvedEntry& e = train_entries[idx];
      jobs.push_back([&e, &config] {
        TrainSample s;
        s.input = preprocess_input(load_binary_volume(e.defective, config.binarize_threshold),
                                   config);
        s.target = preprocess_target(load_binary_volume(e.complete, config.binarize_threshold),
                                     config);
        return s;
      });
    }
    SamplePipeline pipeline(std::move(jobs), config.workers,
                            static_cast<size_t>(config.workers) * 2 + 2);

    size_t remaining = order.size();
    int step = 0;
    while (remaining > 0) {
      size_t take = std::min<size_t>(remaining, static_cast<size_t>(config.batch_size));
      std::vector<Tensor> inputs, targets;
      inputs.reserve(take);
      targets.reserve(take);
      for (size_t i = 0; i < take; ++i) {
        TrainSample s = pipeline.next();
        inputs.push_back(std::move(s.input));
        targets.push_back(std::move(s.target));
      }
      remaining -= take;
      ++step;

      Tensor batch_in = stack_batch(inputs);
      Tensor batch_target = stack_batch(targets);
      model.zero_grad();
      Var logits = model.forward(make_leaf(std::move(batch_in)));
      Var loss = dice_loss(logits, batch_target);
      backward(loss);
      adam_step(model.parameters(), opt, adam);

      if (log) {
        char line[96];
        std::snprintf(line, sizeof(line), "epoch=%lld step=%d loss=%.6f",
                      static_cast<long long>(epoch + 1), step,
                      static_cast<double>(loss->value.data[0]));
        (*log) << line << "\n";
      }
    }

    bool last_epoch = epoch + 1 == config.epochs;
    if (!val_entries.empty() &&
        ((epoch + 1) % config.validate_every == 0 || last_epoch)) {
      double both = 0.0;
      double fg = validate_split(model, config, val_entries, &both);
      if (log) {
        char line[96];
        std::snprintf(line, sizeof(line), "epoch=%lld val_dice=%.6f val_dice_both=%.6f",
                      static_cast<long long>(epoch + 1), fg, both);
        (*log) << line << "\n";
      }
      if (fg > best_val) {
        best_val = fg;
        save_checkpoint(snapshot(epoch + 1), best_path);
      }
    }

    final_ckpt = snapshot(epoch + 1);
    save_checkpoint(final_ckpt, last_path);
  }

  if (val_entries.empty() && !std::filesystem::exists(best_path))
    save_checkpoint(final_ckpt, best_path);
  return final_ckpt;
}

Volume reconstruct(const Checkpoint& ckpt, const Volume& defective) {
  Model model = model_from_checkpoint(ckpt);
  NoGradGuard no_grad;
  const TrainConfig& config = ckpt.config;
  Volume bin = binarize(defective, config.binarize_threshold);
  Tensor input = preprocess_input(bin, config);
  Var logits = model.forward(make_leaf(std::move(input)));
  Volume pred = logits_to_binary(logits->value, 0, config.resize);
  Volume back = resize_area(pred, defective.dims);
  Volume out = binarize(back, 0.5f);
  out.spacing = defective.spacing;
  out.origin = defective.origin;
  return out;
}

std::string evaluate(const Checkpoint& ckpt, const std::filesystem::path& manifest_path,
                     const std::string& split) {
  DatasetManifest manifest = load_manifest(manifest_path, /*check_files=*/true,
                                           /*require_splits=*/true);
  auto entries = resolve_split(manifest, manifest_path, split);
  if (entries.empty())
    throw Error(ErrorCode::InsufficientData, "split '" + split + "' has no usable entries");

  const float thr = ckpt.config.binarize_threshold;
  nlohmann::ordered_json cases = nlohmann::ordered_json::array();
  std::vector<double> fg_all, both_all, border_all;
  for (const auto& e : entries) {
    Volume defective = load_binary_volume(e.defective, thr);
    Volume complete = load_binary_volume(e.complete, thr);
    Volume pred = reconstruct(ckpt, defective);

    double fg = dice_metric(pred, complete);
    Volume pred_bg = pred, truth_bg = complete;
    for (size_t i = 0; i < pred.u8.size(); ++i) {
      pred_bg.u8[i] = 1 - pred.u8[i];
      truth_bg.u8[i] = 1 - complete.u8[i];
    }
    double both = (fg + dice_metric(pred_bg, truth_bg)) / 2.0;

    nlohmann::ordered_json row;
    row["id"] = e.id;
    row["dice_fg"] = fg;
    row["dice_both"] = both;
    fg_all.push_back(fg);
    both_all.push_back(both);

    if (!e.implant.empty()) {
      Volume implant = load_binary_volume(e.implant, thr);
      if (implant.foreground_count() > 0 && implant.dims == pred.dims) {
        CropRegion bbox = foreground_bbox(implant);
        double border = dice_metric(crop(pred, bbox), crop(complete, bbox));
        row["dice_border"] = border;
        border_all.push_back(border);
      } else {
        row["dice_border"] = nullptr;
      }
    } else {
      row["dice_border"] = nullptr;
    }
    cases.push_back(std::move(row));
  }

  auto mean_std = [](const std::vector<double>& xs) {
    double mean = 0, var = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return std::pair<double, double>(mean, std::sqrt(var));
  };

  nlohmann::ordered_json report;
  report["split"] = split;
  report["num_cases"] = entries.size();
  report["cases"] = std::move(cases);
  auto [mf, sf] = mean_std(fg_all);
  report["mean_dice_fg"] = mf;
  report["std_dice_fg"] = sf;
  auto [mb, sb] = mean_std(both_all);
  report["mean_dice_both"] = mb;
  report["std_dice_both"] = sb;
  if (!border_all.empty()) {
    auto [mr, sr] = mean_std(border_all);
    report["mean_dice_border"] = mr;
    report["std_dice_border"] = sr;
  } else {
    report["mean_dice_border"] = nullptr;
    report["std_dice_border"] = nullptr;
  }
  return report.dump(2) + "\n";
}

}  // namespace skullkit
