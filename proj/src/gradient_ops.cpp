#include "spsr/gradient_ops.hpp"

#include "spsr/error.hpp"

#include <string>

namespace spsr {
namespace {

void check_image(const torch::Tensor& img) {
  if (img.dim() != 4) {
    throw ShapeError("gradient map: expected [B, C, H, W], got rank " + std::to_string(img.dim()));
  }
  const auto channels = img.size(1);
  if (channels != 1 && channels != 3) {
    throw ShapeError("gradient map: channels must be 1 or 3, got " + std::to_string(channels));
  }
  if (img.size(2) < 3 || img.size(3) < 3) {
    throw ShapeError("gradient map: spatial dims must be >= 3, got " +
                     std::to_string(img.size(2)) + "x" + std::to_string(img.size(3)));
  }
}

// Depthwise kernels: [C, 1, 3, 3], one copy of the stencil per channel.
torch::Tensor stencil(int64_t channels, bool horizontal, const torch::TensorOptions& opts) {
  auto k = torch::zeros({3, 3}, opts);
  if (horizontal) {
    k[1][0] = -1.0;
    k[1][2] = 1.0;
  } else {
    k[0][1] = -1.0;
    k[2][1] = 1.0;
  }
  return k.view({1, 1, 3, 3}).repeat({channels, 1, 1, 1});
}

}  // namespace

std::pair<torch::Tensor, torch::Tensor> directional_gradients(const torch::Tensor& img) {
  check_image(img);
  const auto channels = img.size(1);
  const auto opts = img.options().requires_grad(false);
  auto padded = torch::nn::functional::pad(
      img, torch::nn::functional::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
  namespace F = torch::nn::functional;
  auto conv_opts = F::Conv2dFuncOptions().groups(channels);
  auto gx = F::conv2d(padded, stencil(channels, true, opts), conv_opts);
  auto gy = F::conv2d(padded, stencil(channels, false, opts), conv_opts);
  return {gx, gy};
}

GradientMap extract_gradient_map(const torch::Tensor& img, double epsilon) {
  if (!(epsilon >= 0.0)) {
    throw ConfigError("gradient map: epsilon must be non-negative");
  }
  auto [gx, gy] = directional_gradients(img);
  return {torch::sqrt(gx * gx + gy * gy + epsilon), epsilon};
}

}  // namespace spsr
