#pragma once

#include <torch/torch.h>

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace spsr {

enum class ChannelMode { rgb, y };

std::string to_string(ChannelMode m);
ChannelMode parse_channel_mode(const std::string& s);

// Returned when the images are identical inside the evaluated region.
inline constexpr double kPsnrCapDb = 99.0;

// ITU-R BT.601 luma of [.., 3, H, W] RGB in [0,1], in the [16/255, 235/255] range.
torch::Tensor rgb_to_y(const torch::Tensor& rgb);

// 10 log10(1 / MSE) over one image ([C,H,W] or [1,C,H,W]) after cropping
// border_crop pixels from every side, capped at kPsnrCapDb.
// Throws ShapeError on shape mismatch or if the crop leaves nothing.
double psnr(const torch::Tensor& a, const torch::Tensor& b, int border_crop = 4,
            ChannelMode mode = ChannelMode::y);

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// dynamic range 1, averaged over valid window positions and channels.
// Throws ShapeError if either spatial dim is below 11 after cropping.
double ssim(const torch::Tensor& a, const torch::Tensor& b, int border_crop = 4, ChannelMode mode = ChannelMode::y);

// External full-reference metrics (e.g. LPIPS) plugged in by name.
using MetricPlugin = std::function<double(const torch::Tensor& a, const torch::Tensor& b)>;

class MetricRegistry {
 public:
  void add(const std::string& name, MetricPlugin plugin);
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  // Throws PluginError naming the missing plugin.
  const MetricPlugin& get(const std::string& name) const;

 private:
  std::map<std::string, MetricPlugin> plugins_;
};

// Delegates to the named plugin and returns its score unchanged.
double external_perceptual_metric(const torch::Tensor& a, const torch::Tensor& b, const MetricRegistry& registry,
                                  const std::string& plugin);

struct ImageScores {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  std::map<std::string, double> extra;  // plugin name -> score
};

struct EvalReport {
  std::vector<ImageScores> images;
  ImageScores mean;  // arithmetic means, id "mean"
  int border_crop = 4;
  ChannelMode mode = ChannelMode::y;

  // image_id,psnr,ssim[,plugins...] with the dataset mean as the last row.
  std::string to_csv() const;
};

struct EvalPair {
  std::string id;
  torch::Tensor sr;
  torch::Tensor hr;
};

EvalReport evaluate_pairs(const std::vector<EvalPair>& pairs, int border_crop, ChannelMode mode,
                          const MetricRegistry* registry = nullptr, const std::vector<std::string>& plugins = {});

}  // namespace spsr
