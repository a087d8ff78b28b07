#pragma once

#include <torch/torch.h>

#include <utility>

namespace spsr {

inline constexpr double kDefaultGradientEpsilon = 1e-12;

// Per-channel gradient magnitude field of an image, same shape as the source.
struct GradientMap {
  torch::Tensor data;  // [B, C, H, W], non-negative
  double epsilon = kDefaultGradientEpsilon;
};

// Central differences gx(x,y) = I(x+1,y) - I(x-1,y), gy(x,y) = I(x,y+1) - I(x,y-1),
// evaluated per channel with a fixed depthwise convolution over a replicate-padded
// input. x indexes width, y indexes height. Differentiable w.r.t. img.
//
// Throws ShapeError unless img is [B, C, H, W] with C in {1, 3} and H, W >= 3.
std::pair<torch::Tensor, torch::Tensor> directional_gradients(const torch::Tensor& img);

// M(I) = sqrt(gx^2 + gy^2 + epsilon), per channel. epsilon keeps the derivative
// finite where the gradient vanishes. Throws ConfigError for negative epsilon.
GradientMap extract_gradient_map(const torch::Tensor& img,
                                 double epsilon = kDefaultGradientEpsilon);

}  // namespace spsr
