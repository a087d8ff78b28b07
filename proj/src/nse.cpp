#include "spsr/nse.hpp"

#include "spsr/error.hpp"

#include <string>

namespace spsr {
namespace {

constexpr int kRequiredReceptiveField = 31;
constexpr int kRequiredStride = 4;

torch::nn::Conv2d conv(int in, int out, int k, int stride) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2));
}

}  // namespace

ReceptiveField receptive_field_of(int kernel_size, const std::vector<int>& strides) {
  ReceptiveField rf;
  for (int s : strides) {
    rf.size += (kernel_size - 1) * rf.stride;
    rf.stride *= s;
  }
  return rf;
}

ReceptiveField receptive_field_of(const NSEConfig& config) {
  return receptive_field_of(config.kernel_size, config.strides);
}

PixelWindow feature_window(const ReceptiveField& rf, int64_t row, int64_t col) {
  const int64_t half = rf.size / 2;
  return {rf.stride * row - half, rf.stride * row + half, rf.stride * col - half,
          rf.stride * col + half};
}

void NSEConfig::validate() const {
  if (num_conv_layers != 6) {
    throw ConfigError("nse.num_conv_layers must be 6, got " + std::to_string(num_conv_layers));
  }
  if (static_cast<int>(strides.size()) != num_conv_layers) {
    throw ConfigError("nse.strides must list one stride per layer");
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("nse.kernel_size must be odd");
  const auto rf = receptive_field_of(*this);
  if (rf.stride != kRequiredStride) {
    throw ConfigError("nse: total stride must be 4, got " + std::to_string(rf.stride));
  }
  if (rf.size != kRequiredReceptiveField) {
    throw ConfigError("nse: receptive field must be 31, got " + std::to_string(rf.size));
  }
  if (num_skip_connections != 2) throw ConfigError("nse.num_skip_connections must be 2");
  if (strides[1] != 1 || strides[2] != 1 || strides[4] != 1 || strides[5] != 1) {
    throw ConfigError("nse: skip connections need stride 1 on layers 2, 3, 5 and 6");
  }
  if (hidden_channels < 1 || out_channels < 1) throw ConfigError("nse: channel counts must be >= 1");
}

NSEImpl::NSEImpl(NSEConfig config) : config_(std::move(config)) {
  config_.validate();
  const int k = config_.kernel_size;
  const int h = config_.hidden_channels;
  const int o = config_.out_channels;
  const auto& s = config_.strides;
  conv1_ = register_module("conv1", conv(3, h, k, s[0]));
  conv2_ = register_module("conv2", conv(h, h, k, s[1]));
  conv3_ = register_module("conv3", conv(h, h, k, s[2]));
  conv4_ = register_module("conv4", conv(h, o, k, s[3]));
  conv5_ = register_module("conv5", conv(o, h, k, s[4]));
  conv6_ = register_module("conv6", conv(h, o, k, s[5]));
}

torch::Tensor NSEImpl::forward(const torch::Tensor& x) {
  auto a = torch::relu(conv1_(x));
  auto b = torch::relu(a + conv3_(torch::relu(conv2_(a))));
  auto c = torch::relu(conv4_(b));
  return c + conv6_(torch::relu(conv5_(c)));
}

NSE build_nse(const NSEConfig& config, uint64_t rng_seed) {
  config.validate();
  torch::manual_seed(rng_seed);
  return NSE(config);
}

torch::Tensor extract_structure_features(NSE& nse, const torch::Tensor& img) {
  if (img.dim() != 4 || img.size(1) != 3) {
    throw ShapeError("structure features: expected [B, 3, H, W], got " + torch::str(img.sizes()));
  }
  const auto rf = receptive_field_of(nse->config()).size;
  if (img.size(2) < rf || img.size(3) < rf) {
    throw ShapeError("structure features: spatial dims must be >= " + std::to_string(rf) + ", got " +
                     std::to_string(img.size(2)) + "x" + std::to_string(img.size(3)));
  }
  return nse->forward(img);
}

}  // namespace spsr
