#include "spsr/metrics.hpp"

#include "spsr/error.hpp"

#include <cmath>
#include <sstream>

namespace spsr {
namespace {

torch::Tensor as_chw(const torch::Tensor& t) {
  if (t.dim() == 4 && t.size(0) == 1) return t[0];
  if (t.dim() == 3) return t;
  throw ShapeError("metrics: expected one image [C,H,W] or [1,C,H,W], got " + torch::str(t.sizes()));
}

// Aligned, cropped, double-precision views of both images in the requested space.
std::pair<torch::Tensor, torch::Tensor> prepare(const torch::Tensor& a, const torch::Tensor& b, int border,
                                                ChannelMode mode) {
  if (a.sizes() != b.sizes()) {
    throw ShapeError("metrics: shape mismatch " + torch::str(a.sizes()) + " vs " + torch::str(b.sizes()));
  }
  auto x = as_chw(a).to(torch::kFloat64);
  auto y = as_chw(b).to(torch::kFloat64);
  if (mode == ChannelMode::y) {
    if (x.size(0) != 3) throw ShapeError("metrics: Y channel mode needs RGB input");
    x = rgb_to_y(x);
    y = rgb_to_y(y);
  }
  const auto h = x.size(1), w = x.size(2);
  if (border < 0 || h <= 2 * border || w <= 2 * border) {
    throw ShapeError("metrics: border crop " + std::to_string(border) + " leaves no pixels");
  }
  x = x.slice(1, border, h - border).slice(2, border, w - border);
  y = y.slice(1, border, h - border).slice(2, border, w - border);
  return {x, y};
}

torch::Tensor gaussian_window() {
  auto coords = torch::arange(11, torch::kFloat64) - 5.0;
  auto g = torch::exp(-coords.square() / (2.0 * 1.5 * 1.5));
  g = g / g.sum();
  return g.outer(g).view({1, 1, 11, 11});
}

}  // namespace

std::string to_string(ChannelMode m) { return m == ChannelMode::y ? "y" : "rgb"; }

ChannelMode parse_channel_mode(const std::string& s) {
  if (s == "y" || s == "Y") return ChannelMode::y;
  if (s == "rgb" || s == "RGB") return ChannelMode::rgb;
  throw ConfigError("unknown channel mode '" + s + "' (expected y or rgb)");
}

torch::Tensor rgb_to_y(const torch::Tensor& rgb) {
  auto r = rgb.select(-3, 0), g = rgb.select(-3, 1), b = rgb.select(-3, 2);
  return ((65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0).unsqueeze(-3);
}

double psnr(const torch::Tensor& a, const torch::Tensor& b, int border_crop, ChannelMode mode) {
  auto [x, y] = prepare(a, b, border_crop, mode);
  const double mse = (x - y).square().mean().item<double>();
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

double ssim(const torch::Tensor& a, const torch::Tensor& b, int border_crop, ChannelMode mode) {
  auto [x, y] = prepare(a, b, border_crop, mode);
  if (x.size(1) < 11 || x.size(2) < 11) {
    throw ShapeError("ssim: need at least 11x11 pixels after cropping, got " + std::to_string(x.size(1)) + "x" +
                     std::to_string(x.size(2)));
  }
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  // Channels become the batch dim so one single-channel window serves all of them.
  x = x.unsqueeze(1);
  y = y.unsqueeze(1);
  const auto win = gaussian_window();
  auto filt = [&](const torch::Tensor& t) { return torch::conv2d(t, win); };
  auto mu_x = filt(x), mu_y = filt(y);
  auto var_x = filt(x * x) - mu_x.square();
  auto var_y = filt(y * y) - mu_y.square();
  auto cov = filt(x * y) - mu_x * mu_y;
  auto map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / ((mu_x.square() + mu_y.square() + c1) * (var_x + var_y + c2));
  return map.mean().item<double>();
}

void MetricRegistry::add(const std::string& name, MetricPlugin plugin) { plugins_[name] = std::move(plugin); }

bool MetricRegistry::contains(const std::string& name) const { return plugins_.count(name) > 0; }

std::vector<std::string> MetricRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : plugins_) out.push_back(name);
  return out;
}

const MetricPlugin& MetricRegistry::get(const std::string& name) const {
  auto it = plugins_.find(name);
  if (it == plugins_.end()) {
    throw PluginError("metric plugin '" + name + "' is not registered");
  }
  return it->second;
}

double external_perceptual_metric(const torch::Tensor& a, const torch::Tensor& b, const MetricRegistry& registry,
                                  const std::string& plugin) {
  return registry.get(plugin)(a, b);
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "image_id,psnr,ssim";
  for (const auto& [name, _] : mean.extra) out << "," << name;
  out << "\n";
  auto row = [&](const ImageScores& s) {
    out << s.id << "," << s.psnr << "," << s.ssim;
    for (const auto& [name, _] : mean.extra) out << "," << s.extra.at(name);
    out << "\n";
  };
  for (const auto& s : images) row(s);
  row(mean);
  return out.str();
}

EvalReport evaluate_pairs(const std::vector<EvalPair>& pairs, int border_crop, ChannelMode mode,
                          const MetricRegistry* registry, const std::vector<std::string>& plugins) {
  EvalReport report;
  report.border_crop = border_crop;
  report.mode = mode;
  report.mean.id = "mean";
  for (const auto& name : plugins) {
    if (registry == nullptr) throw PluginError("metric plugin '" + name + "' requested without a registry");
    registry->get(name);
    report.mean.extra[name] = 0.0;
  }
  for (const auto& p : pairs) {
    ImageScores s{p.id, psnr(p.sr, p.hr, border_crop, mode), ssim(p.sr, p.hr, border_crop, mode), {}};
    for (const auto& name : plugins) s.extra[name] = external_perceptual_metric(p.sr, p.hr, *registry, name);
    report.images.push_back(std::move(s));
  }
  if (!report.images.empty()) {
    const double n = static_cast<double>(report.images.size());
    for (const auto& s : report.images) {
      report.mean.psnr += s.psnr;
      report.mean.ssim += s.ssim;
      for (const auto& [name, v] : s.extra) report.mean.extra[name] += v;
    }
    report.mean.psnr /= n;
    report.mean.ssim /= n;
    for (auto& [name, v] : report.mean.extra) v /= n;
  }
  return report;
}

}  // namespace spsr
