#include "spsr/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace spsr {

torch::Tensor synthetic_image(int64_t height, int64_t width, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto color = [&] { return torch::tensor({unit(rng), unit(rng), unit(rng)}).view({3, 1, 1}); };

  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto ys = torch::arange(height, opts).view({height, 1}).expand({height, width});
  auto xs = torch::arange(width, opts).view({1, width}).expand({height, width});
  const double h = static_cast<double>(height), w = static_cast<double>(width);

  // Bilinear blend of four corner colours plus a slow sinusoidal shading.
  auto u = xs / std::max(w - 1.0, 1.0), v = ys / std::max(h - 1.0, 1.0);
  auto img = color() * ((1 - u) * (1 - v)) + color() * (u * (1 - v)) + color() * ((1 - u) * v) + color() * (u * v);
  const double fx = 2.0 * std::numbers::pi * (0.5 + 1.5 * unit(rng)) / w;
  const double fy = 2.0 * std::numbers::pi * (0.5 + 1.5 * unit(rng)) / h;
  img = img * 0.7 + 0.15 * (1 + torch::sin(xs * fx + ys * fy + 6.28 * unit(rng))).unsqueeze(0) * 0.5;

  auto paint = [&](const torch::Tensor& mask) { img = torch::where(mask.unsqueeze(0), color().expand_as(img), img); };

  const int shapes = 6 + static_cast<int>(unit(rng) * 8);
  for (int s = 0; s < shapes; ++s) {
    const double cy = unit(rng) * h, cx = unit(rng) * w;
    const double size = (0.05 + 0.2 * unit(rng)) * std::min(h, w);
    switch (static_cast<int>(unit(rng) * 4)) {
      case 0:  // disc
        paint((ys - cy).square() + (xs - cx).square() < size * size);
        break;
      case 1: {  // rotated rectangle
        const double a = unit(rng) * std::numbers::pi;
        auto ry = (ys - cy) * std::cos(a) - (xs - cx) * std::sin(a);
        auto rx = (ys - cy) * std::sin(a) + (xs - cx) * std::cos(a);
        paint((ry.abs() < size * (0.3 + 0.7 * unit(rng))) & (rx.abs() < size));
        break;
      }
      case 2: {  // thick line segment
        const double a = unit(rng) * std::numbers::pi;
        const double thickness = 1.0 + 3.0 * unit(rng);
        auto along = (ys - cy) * std::sin(a) + (xs - cx) * std::cos(a);
        auto across = (ys - cy) * std::cos(a) - (xs - cx) * std::sin(a);
        paint((across.abs() < thickness) & (along.abs() < 2.0 * size));
        break;
      }
      default: {  // stripe patch
        const double a = unit(rng) * std::numbers::pi;
        const double period = 4.0 + 8.0 * unit(rng);
        auto along = (ys - cy) * std::sin(a) + (xs - cx) * std::cos(a);
        auto inside = ((ys - cy).abs() < size) & ((xs - cx).abs() < size);
        paint(inside & (torch::sin(along * (2.0 * std::numbers::pi / period)) > 0));
        break;
      }
    }
  }
  return img.clamp(0.0, 1.0).to(torch::kFloat32).contiguous();
}

std::vector<DatasetItem> synthetic_dataset(int count, int64_t height, int64_t width, uint64_t seed) {
  std::vector<DatasetItem> out;
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%04d", i);
    out.push_back({id, synthetic_image(height, width, seed * 1000003ULL + static_cast<uint64_t>(i)), {}});
  }
  return out;
}

}  // namespace spsr
