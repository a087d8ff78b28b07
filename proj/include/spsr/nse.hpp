#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace spsr {

struct NSEConfig {
  int num_conv_layers = 6;
  int kernel_size = 3;
  std::vector<int> strides{2, 1, 1, 2, 1, 1};
  int hidden_channels = 64;
  int out_channels = 32;
  int num_skip_connections = 2;

  // Requires total stride 4 and receptive field 31; throws ConfigError otherwise.
  void validate() const;
};

struct ReceptiveField {
  int size = 1;    // side of the square input window seen by one feature
  int stride = 1;  // input pixels between neighbouring features
};

// rf += (k - 1) * jump; jump *= stride, over the layers in order.
ReceptiveField receptive_field_of(const NSEConfig& config);
ReceptiveField receptive_field_of(int kernel_size, const std::vector<int>& strides);

// Inclusive input-pixel window of the feature at grid index (row, col). With same
// padding every layer is centred, so the window is centred at stride * index.
struct PixelWindow {
  int64_t row0, row1, col0, col1;
};
PixelWindow feature_window(const ReceptiveField& rf, int64_t row, int64_t col);

// Six-convolution residual extractor. Layers 2-3 and 5-6 (the stride-1 pairs) are
// wrapped by identity skips; layer 4 narrows to out_channels so the second skip
// needs no projection. Every layer but the last is followed by ReLU; the output is
// the un-rectified residual sum.
class NSEImpl : public torch::nn::Module {
 public:
  explicit NSEImpl(NSEConfig config);
  torch::Tensor forward(const torch::Tensor& x);
  const NSEConfig& config() const { return config_; }

 private:
  NSEConfig config_;
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr}, conv4_{nullptr},
      conv5_{nullptr}, conv6_{nullptr};
};
TORCH_MODULE(NSE);

NSE build_nse(const NSEConfig& config, uint64_t rng_seed);

// Returns [B, 32, ceil(H/4), ceil(W/4)] (exactly H/4 x W/4 for multiples of 4).
// Throws ShapeError for non-3-channel input or spatial dims below 31.
torch::Tensor extract_structure_features(NSE& nse, const torch::Tensor& img);

}  // namespace spsr
