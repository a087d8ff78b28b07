#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>

namespace spsr {

enum class DiscriminatorKind { image, gradient_map, structure_feature };

std::string to_string(DiscriminatorKind kind);

struct DiscriminatorConfig {
  DiscriminatorKind kind = DiscriminatorKind::image;
  int in_channels = 3;   // 3 for image / gradient_map, 32 for structure_feature
  int input_size = 128;  // spatial size of the (square) input the dense head expects
  int base_channels = 64;

  // Image and gradient-map critics halve five times; the structure-feature critic
  // sees inputs already 4x smaller and drops the first two stages. Small inputs
  // lose stages until the last map is at least 4x4 (at least one stage is kept).
  int num_stages() const;

  void validate() const;

  static DiscriminatorConfig for_kind(DiscriminatorKind kind, int input_size, int base_channels = 64);
};

// Strided VGG-style classifier: per stage a 3x3 conv and a 4x4 stride-2 conv, each
// followed by instance normalization (batch independent) and LeakyReLU, then two
// dense layers emitting one unnormalized logit per sample.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig config);
  torch::Tensor forward(const torch::Tensor& x);
  const DiscriminatorConfig& config() const { return config_; }

 private:
  DiscriminatorConfig config_;
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(Discriminator);

Discriminator build_discriminator(const DiscriminatorConfig& config, uint64_t rng_seed);

// Returns logits of shape [B]. Throws ShapeError if the batch does not match the config.
torch::Tensor discriminate(Discriminator& d, const torch::Tensor& batch);

// 19-layer VGG feature stack truncated at a named convolution (pre-activation).
// Inputs in [0,1] are normalized with the ImageNet statistics the backbone expects.
class PerceptualExtractorImpl : public torch::nn::Module {
 public:
  // Throws ConfigError for an unknown layer id.
  explicit PerceptualExtractorImpl(std::string layer_id);
  torch::Tensor forward(const torch::Tensor& x);

  const std::string& layer_id() const { return layer_id_; }
  // Spatial downsampling between input and output (1, 2, 4, 8 or 16).
  int stride() const { return stride_; }

 private:
  std::string layer_id_;
  int stride_ = 1;
  torch::nn::Sequential features_{nullptr};
  torch::Tensor mean_, std_;
};
TORCH_MODULE(PerceptualExtractor);

struct PerceptualConfig {
  std::string layer_id = "conv5_4";
  // Checkpoint file with `perceptual/<name>` tensors, or "random" for a fixed-seed
  // randomly initialized extractor.
  std::string weights_path = "random";
};

inline constexpr uint64_t kRandomPerceptualSeed = 19;

// Parameters are frozen (requires_grad = false) and the module is in eval mode.
// Throws DataError when weights_path is neither "random" nor a readable archive.
PerceptualExtractor build_perceptual_extractor(const PerceptualConfig& config);

torch::Tensor perceptual_features(PerceptualExtractor& ex, const torch::Tensor& x);

}  // namespace spsr
