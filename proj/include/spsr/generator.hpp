#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace spsr {

struct GeneratorConfig {
  int num_rrdb_blocks = 23;
  // 1-based trunk block indices whose outputs feed the gradient branch.
  std::vector<int> tap_indices{5, 10, 15, 20};
  int base_channels = 64;
  int growth_channels = 32;
  int scale_factor = 4;

  // One gradient block per tap.
  int num_gradient_blocks() const { return static_cast<int>(tap_indices.size()); }

  // Throws ConfigError naming the first violated constraint.
  void validate() const;

  // Small trunk with taps spread evenly, e.g. (4) -> taps {1, 2, 3, 4}.
  static GeneratorConfig desk(int num_blocks = 4, int base_channels = 16, int growth_channels = 8);
};

// Dense block with five 3x3 convolutions, residual scaled by 0.2.
class ResidualDenseBlockImpl : public torch::nn::Module {
 public:
  ResidualDenseBlockImpl(int channels, int growth);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr}, conv4_{nullptr},
      conv5_{nullptr};
};
TORCH_MODULE(ResidualDenseBlock);

// Residual-in-residual dense block: three dense blocks with an outer scaled skip.
class RRDBImpl : public torch::nn::Module {
 public:
  RRDBImpl(int channels, int growth);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ResidualDenseBlock rdb1_{nullptr}, rdb2_{nullptr}, rdb3_{nullptr};
};
TORCH_MODULE(RRDB);

struct GeneratorOutput {
  torch::Tensor sr_image;                // [B, 3, 4H, 4W]
  torch::Tensor predicted_gradient_map;  // [B, 3, 4H, 4W]
  torch::Tensor gradient_features;       // next-to-last gradient-branch features, [B, C, 4H, 4W]
};

struct ForwardOptions {
  // Ablation: feed zeros instead of gradient features into the fusion block.
  bool zero_gradient_features = false;
};

// Two-branch generator. The SR branch is an RRDB trunk whose intermediate outputs
// are tapped into the gradient branch; the gradient branch super-resolves M(LR)
// and returns its features to the fusion block at HR resolution.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig config);

  GeneratorOutput forward(const torch::Tensor& lr, const ForwardOptions& options = {});

  const GeneratorConfig& config() const { return config_; }

 private:
  GeneratorConfig config_;

  // SR branch
  torch::nn::Conv2d conv_first_{nullptr};
  torch::nn::ModuleList trunk_{nullptr};
  torch::nn::Conv2d trunk_conv_{nullptr};
  torch::nn::Conv2d upconv1_{nullptr}, upconv2_{nullptr};
  torch::nn::Conv2d hr_conv_{nullptr};

  // Gradient branch
  torch::nn::Conv2d grad_conv_first_{nullptr};
  torch::nn::ModuleList grad_merge_{nullptr};   // 1x1 convs: cat(grad, tap) -> C
  torch::nn::ModuleList grad_blocks_{nullptr};  // one RRDB per tap
  torch::nn::Conv2d grad_upconv1_{nullptr}, grad_upconv2_{nullptr};
  torch::nn::Conv2d grad_hr_conv_{nullptr};
  torch::nn::Conv2d grad_out_{nullptr};  // 1x1, emits the predicted gradient map

  // Fusion block
  torch::nn::Conv2d fuse_conv_{nullptr};
  RRDB fuse_block_{nullptr};
  torch::nn::Conv2d fuse_hr_conv_{nullptr};
  torch::nn::Conv2d conv_last_{nullptr};
};
TORCH_MODULE(Generator);

// Deterministic given rng_seed; the global torch generator is reseeded.
Generator build_generator(const GeneratorConfig& config, uint64_t rng_seed);

// Evaluation-mode forward without autograd bookkeeping.
// Throws ShapeError for non-3-channel input or spatial dims below 8.
GeneratorOutput super_resolve(Generator& gen, const torch::Tensor& lr,
                              const ForwardOptions& options = {});

}  // namespace spsr
