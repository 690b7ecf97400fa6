#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skullkit/autodiff.hpp"

namespace skullkit {

struct ModelConfig {
  int spatial_dims = 3;  // fixed
  int in_channels = 1;
  int out_channels = 2;
  std::vector<int> channels{32, 64, 64, 128, 128, 256};
  std::vector<int> strides{2, 2, 2, 2, 2, 2};
  int num_res_units = 0;  // fixed
  std::string activation = "prelu";  // or "relu" (prelu with frozen alpha 0)

  void validate() const;
  int64_t stride_product() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerSpec {
  bool transposed = false;
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  int output_padding = 0;  // transposed layers only
  bool activated = true;   // PReLU after this layer
};

// Symmetric strided-conv encoder mirrored by a transposed-conv decoder.
// Kernel 3, padding 1 throughout; the final decoder layer emits logits.
class Model {
 public:
  Model() = default;
  Model(ModelConfig config, uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  size_t encoder_layer_count() const;
  size_t decoder_layer_count() const;

  // Parameters in declaration order (layer 0 weight, bias, [alpha], layer 1 ...).
  const std::vector<Var>& parameters() const { return params_; }
  std::vector<Var>& parameters() { return params_; }
  const std::vector<std::string>& parameter_names() const { return param_names_; }

  void zero_grad();

  // x: (N, in_channels, D, H, W); returns logits (N, out_channels, D, H, W).
  // Spatial dims must be divisible by the stride product.
  Var forward(const Var& x) const;

  // Flat copies of parameter values, declaration order (for checkpoints).
  std::vector<std::vector<float>> export_parameters() const;
  void import_parameters(const std::vector<std::vector<float>>& blobs);

  uint64_t parameter_hash() const;

 private:
  ModelConfig config_;
  std::vector<LayerSpec> layers_;
  std::vector<Var> params_;
  std::vector<std::string> param_names_;
  // per-layer indices into params_
  std::vector<int> weight_of_, bias_of_, alpha_of_;
};

Model build_autoencoder(const ModelConfig& config, uint64_t init_seed);

}  // namespace skullkit
