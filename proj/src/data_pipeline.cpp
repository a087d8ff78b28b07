#include "spsr/data_pipeline.hpp"

#include "spsr/error.hpp"
#include "spsr/image_io.hpp"

#include <iostream>

#include <algorithm>
#include <cmath>

namespace spsr {
namespace {

int64_t reflect_index(int64_t j, int64_t n) {
  while (j < 0 || j >= n) {
    if (j < 0) j = -j - 1;
    if (j >= n) j = 2 * n - j - 1;
  }
  return j;
}

torch::Tensor augment(const torch::Tensor& img, bool flip, int rot) {
  auto out = flip ? img.flip({-1}) : img;
  return rot == 0 ? out : torch::rot90(out, rot, {-2, -1});
}

std::vector<size_t> eligible(const std::vector<torch::Tensor>& images, int64_t size) {
  std::vector<size_t> out;
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].size(-2) >= size && images[i].size(-1) >= size) out.push_back(i);
  }
  return out;
}

}  // namespace

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

torch::Tensor bicubic_weights(int64_t in_size, int64_t out_size, double scale) {
  auto weights = torch::zeros({out_size, in_size}, torch::kFloat64);
  auto acc = weights.accessor<double, 2>();
  const double kernel_scale = std::min(scale, 1.0);
  const double support = 2.0 / kernel_scale;
  for (int64_t i = 0; i < out_size; ++i) {
    const double center = (static_cast<double>(i) + 0.5) / scale - 0.5;
    const auto left = static_cast<int64_t>(std::floor(center - support));
    const auto right = static_cast<int64_t>(std::ceil(center + support));
    double sum = 0.0;
    for (int64_t j = left; j <= right; ++j) {
      const double w = cubic_kernel((center - static_cast<double>(j)) * kernel_scale);
      if (w == 0.0) continue;
      acc[i][reflect_index(j, in_size)] += w;
      sum += w;
    }
    for (int64_t j = 0; j < in_size; ++j) acc[i][j] /= sum;
  }
  return weights;
}

torch::Tensor bicubic_resize(const torch::Tensor& img, Ratio factor) {
  if (img.dim() < 2) throw ShapeError("bicubic_resize: need at least 2 dims");
  if (factor.num <= 0 || factor.den <= 0) throw ShapeError("bicubic_resize: factor must be positive");
  const auto in_h = img.size(-2), in_w = img.size(-1);
  const auto out_h = in_h * factor.num / factor.den;
  const auto out_w = in_w * factor.num / factor.den;
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("bicubic_resize: degenerate output size " + std::to_string(out_h) + "x" +
                     std::to_string(out_w));
  }
  const double scale = factor.value();
  auto wy = bicubic_weights(in_h, out_h, scale).to(img.device());
  auto wx = bicubic_weights(in_w, out_w, scale).to(img.device());
  auto x = img.to(torch::kFloat64);
  return wy.matmul(x).matmul(wx.t()).to(img.scalar_type());
}

std::vector<DatasetItem> load_dataset(const DatasetSpec& spec) {
  namespace fs = std::filesystem;
  const auto dir = spec.root / spec.hr_subdir;
  if (!fs::is_directory(dir)) throw DataError("dataset: directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  const auto lr_dir = spec.root / ("LRx" + std::to_string(spec.scale));
  std::vector<DatasetItem> items;
  for (const auto& f : files) {
    try {
      DatasetItem item{f.stem().string(), read_image(f), {}};
      if (spec.cache_lr && fs::is_regular_file(lr_dir / f.filename())) {
        item.lr = read_image(lr_dir / f.filename());
      }
      items.push_back(std::move(item));
    } catch (const DataError& e) {
      std::cerr << "warning: dataset: skipping " << f.string() << ": " << e.what() << "\n";
    }
  }
  if (items.empty()) throw DataError("dataset: no readable PNG images in " + dir.string());
  return items;
}

PatchBatch sample_patch_batch(const std::vector<DatasetItem>& dataset, const PatchOptions& options, Rng& rng) {
  const int64_t hr_patch = static_cast<int64_t>(options.lr_patch) * options.scale;
  std::vector<size_t> pool;
  for (size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].hr.size(-2) >= hr_patch && dataset[i].hr.size(-1) >= hr_patch) pool.push_back(i);
  }
  if (pool.empty()) {
    throw DataError("patch sampling: no image is at least " + std::to_string(hr_patch) + " pixels on each side");
  }
  PatchBatch batch;
  std::vector<torch::Tensor> lrs, hrs;
  for (int b = 0; b < options.batch_size; ++b) {
    const auto& item = dataset[pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)]];
    const int64_t lr_h = item.hr.size(-2) / options.scale, lr_w = item.hr.size(-1) / options.scale;
    const auto ly = std::uniform_int_distribution<int64_t>(0, lr_h - options.lr_patch)(rng);
    const auto lx = std::uniform_int_distribution<int64_t>(0, lr_w - options.lr_patch)(rng);
    bool flip = false;
    int rot = 0;
    if (options.augment) {
      flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
      rot = std::uniform_int_distribution<int>(0, 3)(rng);
    }
    auto hr = item.hr.slice(-2, ly * options.scale, ly * options.scale + hr_patch)
                  .slice(-1, lx * options.scale, lx * options.scale + hr_patch);
    hr = augment(hr, flip, rot).contiguous();
    torch::Tensor lr;
    if (item.lr.defined()) {
      lr = augment(item.lr.slice(-2, ly, ly + options.lr_patch).slice(-1, lx, lx + options.lr_patch), flip, rot);
    } else {
      lr = bicubic_resize(hr, {1, options.scale});
    }
    hrs.push_back(hr);
    lrs.push_back(lr.contiguous());
    batch.source_ids.push_back(item.id);
  }
  batch.hr = torch::stack(hrs);
  batch.lr = torch::stack(lrs);
  return batch;
}

torch::Tensor sample_image_patches(const std::vector<torch::Tensor>& images, int batch_size, int patch_size,
                                   Rng& rng) {
  const auto pool = eligible(images, patch_size);
  if (pool.empty()) {
    throw DataError("patch sampling: no image is at least " + std::to_string(patch_size) + " pixels on each side");
  }
  std::vector<torch::Tensor> out;
  for (int b = 0; b < batch_size; ++b) {
    const auto& img = images[pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)]];
    const auto y = std::uniform_int_distribution<int64_t>(0, img.size(-2) - patch_size)(rng);
    const auto x = std::uniform_int_distribution<int64_t>(0, img.size(-1) - patch_size)(rng);
    out.push_back(img.slice(-2, y, y + patch_size).slice(-1, x, x + patch_size));
  }
  return torch::stack(out);
}

std::vector<torch::Tensor> hr_images(const std::vector<DatasetItem>& dataset) {
  std::vector<torch::Tensor> out;
  out.reserve(dataset.size());
  for (const auto& item : dataset) out.push_back(item.hr);
  return out;
}

}  // namespace spsr
