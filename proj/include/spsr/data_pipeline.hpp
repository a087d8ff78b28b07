#pragma once

#include "spsr/ssl_pretext.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spsr {

// Exact rational resize factor (output / input).
struct Ratio {
  int64_t num = 1;
  int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// Keys cubic kernel with a = -0.5.
double cubic_kernel(double x);

// [out, in] interpolation matrix for one axis. Sample i of the output sits at input
// coordinate (i + 0.5) / scale - 0.5; when downscaling the kernel is stretched by
// 1 / scale (antialiasing). Out-of-range taps reflect symmetrically about the edge
// (-1 -> 0, -2 -> 1, n -> n-1) and each row is normalized to sum to 1.
torch::Tensor bicubic_weights(int64_t in_size, int64_t out_size, double scale);

// Separable bicubic resize of the last two dims; output size is floor(in * factor).
// Computed in double precision and returned in the input dtype.
// Throws ShapeError if an output dim would be < 1.
torch::Tensor bicubic_resize(const torch::Tensor& img, Ratio factor);

enum class Split { train, test };

struct DatasetSpec {
  std::filesystem::path root;
  Split split = Split::train;
  std::filesystem::path hr_subdir = "HR";
  bool cache_lr = false;  // use <root>/LRx<scale>/<name> when present
  int scale = 4;
};

struct DatasetItem {
  std::string id;        // file stem
  torch::Tensor hr;      // [3, H, W] in [0, 1]
  torch::Tensor lr;      // cached LR or undefined
};

// PNG files under <root>/<hr_subdir>, in lexicographic order. Undecodable files are
// skipped with a warning. Throws DataError if the directory is missing or nothing loads.
std::vector<DatasetItem> load_dataset(const DatasetSpec& spec);

struct PatchBatch {
  torch::Tensor lr;  // [B, 3, h, w]
  torch::Tensor hr;  // [B, 3, 4h, 4w]
  std::vector<std::string> source_ids;
};

struct PatchOptions {
  int batch_size = 15;
  int lr_patch = 32;
  int scale = 4;
  bool augment = true;  // random horizontal flip and 90-degree rotation
};

// Random HR crops aligned to the scale grid; LR is the bicubic downscale of each
// (possibly augmented) HR crop, or the matching crop of a cached LR image.
// Images smaller than the HR patch are skipped; throws DataError if all are.
PatchBatch sample_patch_batch(const std::vector<DatasetItem>& dataset, const PatchOptions& options, Rng& rng);

// Random square crops for the pretext tasks: [B, 3, size, size], no augmentation.
torch::Tensor sample_image_patches(const std::vector<torch::Tensor>& images, int batch_size, int patch_size,
                                   Rng& rng);

std::vector<torch::Tensor> hr_images(const std::vector<DatasetItem>& dataset);

}  // namespace spsr
