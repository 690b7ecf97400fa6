#include "skullkit/model.hpp"

#include <cmath>

#include "skullkit/rng.hpp"

namespace skullkit {

namespace {
constexpr int kKernel = 3;
constexpr int kPadding = 1;
constexpr float kPreluInit = 0.25f;
}  // namespace

void ModelConfig::validate() const {
  if (spatial_dims != 3)
    throw Error(ErrorCode::InvalidConfig, "only spatial_dims=3 is supported");
  if (num_res_units != 0)
    throw Error(ErrorCode::InvalidConfig, "residual units are not supported (num_res_units=0)");
  if (channels.empty())
    throw Error(ErrorCode::InvalidConfig, "channels must be nonempty");
  if (channels.size() != strides.size())
    throw Error(ErrorCode::InvalidConfig, "channels and strides must have equal length");
  for (int s : strides)
    if (s < 1) throw Error(ErrorCode::InvalidConfig, "strides must be >= 1");
  if (in_channels < 1 || out_channels < 1)
    throw Error(ErrorCode::InvalidConfig, "channel counts must be >= 1");
  if (activation != "prelu" && activation != "relu")
    throw Error(ErrorCode::InvalidConfig, "activation must be 'prelu' or 'relu'");
}

int64_t ModelConfig::stride_product() const {
  int64_t p = 1;
  for (int s : strides) p *= s;
  return p;
}

Model::Model(ModelConfig config, uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  const size_t L = config_.channels.size();

  // encoder: strided convs
  int prev = config_.in_channels;
  for (size_t i = 0; i < L; ++i) {
    LayerSpec l;
    l.transposed = false;
    l.in_channels = prev;
    l.out_channels = config_.channels[i];
    l.stride = config_.strides[i];
    l.activated = true;
    layers_.push_back(l);
    prev = l.out_channels;
  }
  // decoder: mirrored transposed convs; last layer emits logits
  for (size_t i = 0; i < L; ++i) {
    size_t src = L - 1 - i;
    LayerSpec l;
    l.transposed = true;
    l.in_channels = config_.channels[src];
    l.out_channels = src == 0 ? config_.out_channels : config_.channels[src - 1];
    l.stride = config_.strides[src];
    l.output_padding = l.stride - 1;  // exact mirror of a k=3/p=1 strided conv
    l.activated = i + 1 < L;
    layers_.push_back(l);
  }

  Rng rng(mix_seed(init_seed, 0x6d6f646c));
  const bool learn_alpha = config_.activation == "prelu";
  for (size_t li = 0; li < layers_.size(); ++li) {
    const LayerSpec& l = layers_[li];
    std::string prefix = "layer" + std::to_string(li) + (l.transposed ? ".up" : ".down");

    std::array<int64_t, 5> wshape =
        l.transposed ? std::array<int64_t, 5>{l.in_channels, l.out_channels, kKernel, kKernel, kKernel}
                     : std::array<int64_t, 5>{l.out_channels, l.in_channels, kKernel, kKernel, kKernel};
    Tensor w(wshape);
    double fan_in = static_cast<double>(l.in_channels) * kKernel * kKernel * kKernel;
    double bound = std::sqrt(6.0 / fan_in);  // Kaiming-uniform, fan-in
    for (auto& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
    weight_of_.push_back(static_cast<int>(params_.size()));
    params_.push_back(make_leaf(std::move(w), true));
    param_names_.push_back(prefix + ".weight");

    Tensor b({1, l.out_channels, 1, 1, 1});
    bias_of_.push_back(static_cast<int>(params_.size()));
    params_.push_back(make_leaf(std::move(b), true));
    param_names_.push_back(prefix + ".bias");

    if (l.activated) {
      Tensor a({1, 1, 1, 1, 1});
      a.data[0] = learn_alpha ? kPreluInit : 0.f;
      alpha_of_.push_back(static_cast<int>(params_.size()));
      params_.push_back(make_leaf(std::move(a), learn_alpha));
      param_names_.push_back(prefix + ".alpha");
    } else {
      alpha_of_.push_back(-1);
    }
  }
}

size_t Model::encoder_layer_count() const {
  size_t n = 0;
  for (const auto& l : layers_) n += !l.transposed;
  return n;
}

size_t Model::decoder_layer_count() const {
  size_t n = 0;
  for (const auto& l : layers_) n += l.transposed;
  return n;
}

void Model::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

Var Model::forward(const Var& x) const {
  const Tensor& xv = x->value;
  if (xv.shape[1] != config_.in_channels)
    throw Error(ErrorCode::ShapeMismatch,
                "input has " + std::to_string(xv.shape[1]) + " channels, model expects " +
                    std::to_string(config_.in_channels));
  int64_t sp = config_.stride_product();
  const char* axis_names[3] = {"depth", "height", "width"};
  for (int a = 0; a < 3; ++a)
    if (xv.shape[2 + a] % sp != 0)
      throw Error(ErrorCode::InvalidConfig,
                  std::string("input ") + axis_names[a] + " " + std::to_string(xv.shape[2 + a]) +
                      " is not divisible by the stride product " + std::to_string(sp));

  Var h = x;
  for (size_t li = 0; li < layers_.size(); ++li) {
    const LayerSpec& l = layers_[li];
    const Var& w = params_[static_cast<size_t>(weight_of_[li])];
    const Var& b = params_[static_cast<size_t>(bias_of_[li])];
    h = l.transposed ? conv_transpose3d(h, w, b, l.stride, kPadding, l.output_padding)
                     : conv3d(h, w, b, l.stride, kPadding);
    if (l.activated) h = prelu(h, params_[static_cast<size_t>(alpha_of_[li])]);
  }
  return h;
}

std::vector<std::vector<float>> Model::export_parameters() const {
  std::vector<std::vector<float>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value.data);
  return out;
}

void Model::import_parameters(const std::vector<std::vector<float>>& blobs) {
  if (blobs.size() != params_.size())
    throw Error(ErrorCode::CheckpointCorrupt,
                "parameter count mismatch: blob has " + std::to_string(blobs.size()) +
                    ", model declares " + std::to_string(params_.size()));
  for (size_t i = 0; i < params_.size(); ++i) {
    if (blobs[i].size() != params_[i]->value.data.size())
      throw Error(ErrorCode::CheckpointCorrupt,
                  "parameter '" + param_names_[i] + "' size mismatch");
    params_[i]->value.data = blobs[i];
  }
}

uint64_t Model::parameter_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : params_)
    h = fnv1a(p->value.data.data(), p->value.data.size() * sizeof(float), h);
  return h;
}

Model build_autoencoder(const ModelConfig& config, uint64_t init_seed) {
  return Model(config, init_seed);
}

}  // namespace skullkit
